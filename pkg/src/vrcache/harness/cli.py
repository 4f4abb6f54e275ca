"""Command line entry point: ``python3 -m vrcache <command>``.

Commands::

    run --config FILE                   per-slot metrics.csv and summary.json
    sweep --axis NAME --config FILE     sweep_<axis>.csv and sweep_<axis>.json
    convert-trace --input RAW --format dataset1|dataset2 --output CSV
    report --input DIR [--output DIR]   figure CSVs and summary.md

``--seed``, ``--threads`` and ``--quantize`` override the config file.  On
failure a JSON object ``{"error": ..., "type": ...}`` goes to stderr and the
exit code is 1 (2 for usage errors).
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from ..trace import convert_trace
from .config import ExperimentConfig
from .report import load_sweeps, report
from .runner import SWEEP_AXES, run_experiment, sweep


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML experiment config (defaults when omitted)")
    p.add_argument("--seed", type=int, action="append", help="run only this seed (repeatable)")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("--quantize", choices=("sign", "full"), help="gradient exchange mode for every DP-FL baseline")
    p.add_argument("--output", help="output directory")
    p.add_argument("--baseline", action="append", help="restrict to this baseline (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vrcache", description="Federated FoV caching experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate every configured baseline")
    _add_overrides(p_run)

    p_sweep = sub.add_parser("sweep", help="sweep one axis")
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    _add_overrides(p_sweep)

    p_conv = sub.add_parser("convert-trace", help="rewrite a raw head trace into the CSV schema")
    p_conv.add_argument("--input", required=True)
    p_conv.add_argument("--format", required=True, choices=("dataset1", "dataset2"))
    p_conv.add_argument("--output", required=True)
    p_conv.add_argument("--user", help="user label when the input has no user column")

    p_rep = sub.add_parser("report", help="figure tables from sweep results")
    p_rep.add_argument("--input", required=True, help="directory holding sweep_<axis>.csv files")
    p_rep.add_argument("--output", help="destination (defaults to the input directory)")
    p_rep.add_argument("--baseline", action="append", help="restrict to this baseline (repeatable)")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_toml(args.config) if args.config else ExperimentConfig()
    if args.seed:
        cfg.seeds = list(args.seed)
    if args.threads is not None:
        cfg.threads = args.threads
    if args.quantize is not None:
        cfg.optimizer.quantize = args.quantize
    if args.output is not None:
        cfg.output = args.output
    if args.baseline:
        cfg.baselines = list(args.baseline)
    return cfg.validate()


def _execute(args) -> dict:
    if args.command == "run":
        cfg = load_config(args)
        run_experiment(cfg)
        return {"command": "run", "output": cfg.output}
    if args.command == "sweep":
        cfg = load_config(args)
        rows = sweep(cfg, args.axis)
        return {"command": "sweep", "axis": args.axis, "rows": len(rows), "output": cfg.output}
    if args.command == "convert-trace":
        n = convert_trace(args.input, args.format, args.output, user=args.user)
        return {"command": "convert-trace", "rows": n, "output": args.output}
    paths = report(load_sweeps(args.input), args.output or args.input, baselines=args.baseline)
    return {"command": "report", "files": [str(p) for p in paths]}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = _execute(args)
    except Exception as exc:  # every failure becomes a machine-readable error
        json.dump({"error": str(exc), "type": type(exc).__name__}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    json.dump(result, sys.stdout)
    sys.stdout.write("\n")
    return 0
