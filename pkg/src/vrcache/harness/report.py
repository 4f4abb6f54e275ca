"""Figure-ready CSV tables and a markdown summary from sweep results.

Each figure table is keyed by (axis value, baseline) with the mean and
sample std over seeds.  Column contract (header rows, in order):

``fig3_hit_vs_cache.csv``
    cache_size, baseline, mean_cache_hit, std_cache_hit, n_seeds
``fig4_delay_vs_cache.csv``
    cache_size, baseline, mean_delay_s, std_delay_s, n_seeds
``fig5_hit_vs_bs.csv``
    n_bs, baseline, mean_cache_hit, std_cache_hit, n_seeds
``fig7_delay_vs_bs.csv``
    n_bs, baseline, mean_delay_s, std_delay_s, n_seeds
``fig8_convergence.csv``
    horizon, baseline, mean_loss, std_loss, n_seeds
``fig9_tile_ratio.csv``
    grid, tile_ratio, paper_ratio, baseline, mean_cache_hit, std_cache_hit, n_seeds

``paper_ratio`` is the tile-to-FoV ratio printed on the published axis for
that grid, blank where none is given.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

FIGURE_COLUMNS: Dict[str, tuple] = {
    "fig3_hit_vs_cache.csv": ("cache_size", "baseline", "mean_cache_hit", "std_cache_hit", "n_seeds"),
    "fig4_delay_vs_cache.csv": ("cache_size", "baseline", "mean_delay_s", "std_delay_s", "n_seeds"),
    "fig5_hit_vs_bs.csv": ("n_bs", "baseline", "mean_cache_hit", "std_cache_hit", "n_seeds"),
    "fig7_delay_vs_bs.csv": ("n_bs", "baseline", "mean_delay_s", "std_delay_s", "n_seeds"),
    "fig8_convergence.csv": ("horizon", "baseline", "mean_loss", "std_loss", "n_seeds"),
    "fig9_tile_ratio.csv": (
        "grid", "tile_ratio", "paper_ratio", "baseline", "mean_cache_hit", "std_cache_hit", "n_seeds",
    ),
}

#: Ratios on the published tile-ratio axis, by grid label.
PUBLISHED_TILE_RATIO = {"6x4": 0.24, "10x8": 0.07, "12x10": 0.05}

# figure -> (sweep axis, key column, sweep metric, output metric stem)
_FIGURES = {
    "fig3_hit_vs_cache.csv": ("cache_size", "cache_size", "mean_cache_hit", "cache_hit"),
    "fig4_delay_vs_cache.csv": ("cache_size", "cache_size", "mean_delay_s", "delay_s"),
    "fig5_hit_vs_bs.csv": ("bs_count", "n_bs", "mean_cache_hit", "cache_hit"),
    "fig7_delay_vs_bs.csv": ("bs_count", "n_bs", "mean_delay_s", "delay_s"),
    "fig8_convergence.csv": ("horizon", "horizon", "final_loss", "loss"),
    "fig9_tile_ratio.csv": ("tile_grid", "grid", "mean_cache_hit", "cache_hit"),
}


class ReportError(ValueError):
    """Missing or empty results."""


def _num(x) -> float:
    if x is None or x == "":
        return math.nan
    return float(x)


def _aggregate(rows: Sequence[dict], key: str, metric: str) -> List[tuple]:
    """(key value, baseline, mean, std, n) in first-seen order."""
    groups: Dict[tuple, List[float]] = {}
    for r in rows:
        groups.setdefault((str(r[key]), r["baseline"]), []).append(_num(r[metric]))
    out = []
    for (value, baseline), vals in groups.items():
        v = np.asarray(vals)
        v = v[np.isfinite(v)]
        mean = float(v.mean()) if v.size else math.nan
        std = float(v.std(ddof=1)) if v.size > 1 else 0.0 if v.size else math.nan
        out.append((value, baseline, mean, std, len(vals)))
    return out


def figure_table(name: str, rows: Sequence[dict]) -> List[list]:
    """Rows of one figure CSV (without header) from the matching sweep rows."""
    if name not in _FIGURES:
        raise ReportError(f"unknown figure {name!r}")
    if not rows:
        raise ReportError(f"no results for {name}")
    _, key, metric, _ = _FIGURES[name]
    agg = _aggregate(rows, key, metric)
    if name != "fig9_tile_ratio.csv":
        return [[v, b, m, s, n] for v, b, m, s, n in agg]
    ratio = {str(r["grid"]): _num(r["tile_ratio"]) for r in rows}
    return [[v, ratio[v], PUBLISHED_TILE_RATIO.get(v, ""), b, m, s, n] for v, b, m, s, n in agg]


def _cell(v):
    if isinstance(v, float):
        return "" if not math.isfinite(v) else repr(v)
    return v


def load_sweeps(input_dir) -> Dict[str, List[dict]]:
    """Sweep rows found in ``input_dir``, by axis; missing axes are skipped."""
    path = Path(input_dir)
    if not path.is_dir():
        raise ReportError(f"results directory {str(path)!r} does not exist")
    out = {}
    for axis in ("cache_size", "bs_count", "tile_grid", "horizon"):
        f = path / f"sweep_{axis}.csv"
        if f.is_file():
            with open(f, newline="") as fh:
                out[axis] = list(csv.DictReader(fh))
    return out


def report(
    sweeps: Dict[str, List[dict]],
    output_dir,
    baselines: Optional[Sequence[str]] = None,
) -> List[Path]:
    """Write every figure CSV whose sweep is present, plus ``summary.md``.

    ``baselines`` restricts the tables to a subset; an empty selection, or
    no sweep results at all, raises :class:`ReportError`.
    """
    if baselines is not None:
        keep = set(baselines)
        if not keep:
            raise ReportError("baseline selection is empty")
        sweeps = {a: [r for r in rows if r["baseline"] in keep] for a, rows in sweeps.items()}
    sweeps = {a: rows for a, rows in sweeps.items() if rows}
    if not sweeps:
        raise ReportError("no sweep results to report")
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    tables = {}
    for name, (axis, *_rest) in _FIGURES.items():
        if axis not in sweeps:
            continue
        table = figure_table(name, sweeps[axis])
        tables[name] = table
        path = out_dir / name
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(FIGURE_COLUMNS[name])
            writer.writerows([[_cell(c) for c in row] for row in table])
        written.append(path)
    md = out_dir / "summary.md"
    md.write_text(markdown_summary(tables))
    written.append(md)
    return written


def markdown_summary(tables: Dict[str, List[list]]) -> str:
    lines = ["# Results", ""]
    for name, table in tables.items():
        cols = FIGURE_COLUMNS[name]
        lines += [f"## {name}", "", "| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
        for row in table:
            lines.append("| " + " | ".join(_md(c) for c in row) + " |")
        lines.append("")
    return "\n".join(lines)


def _md(v) -> str:
    if isinstance(v, float):
        return "" if not math.isfinite(v) else f"{v:.4g}"
    return str(v)
