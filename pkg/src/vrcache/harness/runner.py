"""Slot loop, baselines and sweeps.

One work unit simulates one baseline for every seed and every cache budget
at once: each (seed, budget) pair is an independent copy of the network and
the copies are stacked along the BS axis of the optimizer state.  Seed data
(trace, association, rate tables) is computed once and shared by all
baselines.  Work units are independent, so running them on several threads
cannot change any number.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..channel import fetch_time, rendering_time, sample_fading, slot_rates
from ..core import TileGrid, quality_weights
from ..optimizer import (
    DelayInputs,
    FrozenWeights,
    OptimizerConfig,
    delay_halfspace,
    dpfl_round,
    fedavg_round,
    init_fedavg,
    init_network,
)
from ..trace import SyntheticTraceConfig, load_head_trace, synthetic_trace
from .config import BaselineKind, ConfigError, ExperimentConfig

METRIC_COLUMNS = (
    "baseline",
    "seed",
    "cache_size",
    "slot",
    "bs",
    "cache_hit",
    "avg_delay",
    "regret",
    "loss",
    "pac_error",
    "grad_bits_sent",
    "stationarity",
    "infeasible",
)

SWEEP_COLUMNS = (
    "axis",
    "value",
    "baseline",
    "seed",
    "n_bs",
    "cache_size",
    "grid",
    "tile_ratio",
    "horizon",
    "mean_cache_hit",
    "mean_delay_s",
    "final_regret",
    "final_loss",
    "mean_stationarity",
    "grad_bits_total",
    "infeasible_fraction",
)

SWEEP_AXES = ("cache_size", "bs_count", "tile_grid", "horizon")


# --------------------------------------------------------------------------
# Topology and per-seed data
# --------------------------------------------------------------------------


def neighbor_sets(n_bs: int, topology: str) -> List[frozenset]:
    if topology == "full":
        return [frozenset(set(range(n_bs)) - {b}) for b in range(n_bs)]
    out = []
    for b in range(n_bs):
        nb = {b - 1, b + 1}
        if topology == "ring":
            nb = {m % n_bs for m in nb}
        out.append(frozenset(m for m in nb if 0 <= m < n_bs and m != b))
    return out


def neighbor_table(neighbors: Sequence[frozenset], nearest_only: bool = False):
    """(B, K) table with self in column 0, and its validity mask."""
    n_bs = len(neighbors)
    rows = []
    for b, nb in enumerate(neighbors):
        ordered = sorted(nb, key=lambda m: ((m - b) % n_bs, m))
        rows.append([b] + (ordered[:1] if nearest_only else ordered))
    k = max(len(r) for r in rows)
    table = np.array([r + [r[0]] * (k - len(r)) for r in rows], dtype=np.int64)
    mask = np.array([[True] * len(r) + [False] * (k - len(r)) for r in rows], dtype=bool)
    return table, mask


@dataclass
class SeedData:
    """Everything about one seed that does not depend on the algorithm."""

    demands: np.ndarray  # (T, B, U, F), rows of users not served by b are zero
    association: np.ndarray  # (T, B, U) serving mask
    rate_unicast: Optional[np.ndarray] = None  # (T, B, U, F) bits/s, 0 if not requested
    rate_multicast: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        return self.demands.shape[0]


def _trace_for(cfg: ExperimentConfig, seed: int, grid: TileGrid, n_bs: int, horizon: int) -> np.ndarray:
    tr = cfg.trace
    if tr.source == "file":
        mats = load_head_trace(tr.path, tr.slot_duration, grid, binary=tr.binary)
        arr = np.stack([m.values for m in mats])
        return arr[:horizon]
    synth = SyntheticTraceConfig(
        n_users=cfg.network.n_users,
        n_slots=horizon,
        grid=grid,
        correlation=tr.correlation,
        drift_rate=tr.drift_rate,
        seed=seed,
        n_focal=tr.n_focal or n_bs,
        binary=tr.binary,
    )
    return synthetic_trace(synth)


def build_seed_data(
    cfg: ExperimentConfig,
    seed: int,
    grid: TileGrid,
    n_bs: int,
    horizon: int,
    rates: bool = True,
) -> SeedData:
    """Trace, association and (optionally) both rate tables for one seed.

    Users have a home BS (round robin); in each slot a user is served by a
    uniformly drawn other BS with probability ``handover_prob``.
    """
    d = _trace_for(cfg, seed, grid, n_bs, horizon)
    n_slots, n_users, n_tiles = d.shape
    home = np.arange(n_users) % n_bs
    serving = np.broadcast_to(home, (n_slots, n_users)).copy()
    if n_bs > 1 and cfg.network.handover_prob > 0:
        rng = np.random.default_rng([seed, 1])
        roam = rng.random((n_slots, n_users)) < cfg.network.handover_prob
        other = (home + rng.integers(1, n_bs, (n_slots, n_users))) % n_bs
        serving = np.where(roam, other, serving)
    assoc = serving[:, None, :] == np.arange(n_bs)[None, :, None]
    demands = d[:, None, :, :] * assoc[..., None]
    data = SeedData(demands=demands, association=assoc)
    if rates:
        params = cfg.channel.params()
        rng = np.random.default_rng([seed, 2])
        requested = demands > 0
        uni = np.zeros(demands.shape)
        multi = np.zeros(demands.shape)
        for t in range(n_slots):
            h = sample_fading(rng, n_bs, n_users, n_tiles, params.antennas)
            uni[t] = slot_rates(h, requested[t], params, multicast=False)
            multi[t] = slot_rates(h, requested[t], params, multicast=True)
        data.rate_unicast, data.rate_multicast = uni, multi
    return data


# --------------------------------------------------------------------------
# Simulation of one baseline over seeds x budgets
# --------------------------------------------------------------------------


@dataclass
class RunResult:
    """Per-slot metrics of one baseline; arrays are (seeds, budgets, T, B)."""

    baseline: str
    seeds: List[int]
    budgets: List[float]
    cache_hit: np.ndarray
    avg_delay: np.ndarray
    regret: np.ndarray
    pac_error: np.ndarray
    grad_bits: np.ndarray
    stationarity: np.ndarray
    infeasible: np.ndarray
    deployed_last: np.ndarray = field(default=None, repr=False)

    @property
    def loss(self) -> np.ndarray:
        t = np.arange(1, self.cache_hit.shape[2] + 1)
        return self.regret / t[None, None, :, None]

    def per_seed(self, name: str) -> np.ndarray:
        """(seeds, budgets) mean over slots and BSs."""
        arr = getattr(self, name)
        with np.errstate(invalid="ignore"):
            return np.nanmean(arr.astype(float), axis=(2, 3))


def optimizer_config(cfg: ExperimentConfig, kind: BaselineKind, horizon: int) -> OptimizerConfig:
    o = cfg.optimizer
    quantize = "full" if kind in (BaselineKind.SGD_ALGO1, BaselineKind.SGD_ALGO2) else "sign"
    if o.quantize is not None:
        quantize = o.quantize
    tau = 2 if kind == BaselineKind.FIXED_SIGMA_HALF else o.tau
    return OptimizerConfig(
        eta=o.eta,
        mu=o.mu,
        nu=o.nu,
        iota=o.iota,
        tau=tau,
        horizon=max(horizon, tau),
        batch=o.batch,
        quantize=quantize,
        delay_mode="constrained" if kind.delay_aware else "off",
        sigma_penalty=o.sigma_penalty,
        penalty_delta=o.penalty_delta,
        floor=o.floor,
        projection=o.projection,
    )


def _hindsight_curve(quality: np.ndarray, budgets: Sequence[float]) -> np.ndarray:
    """Best fixed cumulative hit up to every slot: (S, nB, T, B)."""
    s, t, b, u, f = quality.shape
    cum = np.cumsum(quality.reshape(s, t, b, u * f), axis=1)
    ranked = -np.sort(-cum, axis=-1)
    out = np.empty((s, len(budgets), t, b))
    for j, c in enumerate(budgets):
        fill = np.clip(c - np.arange(u * f), 0.0, 1.0)
        out[:, j] = ranked @ fill
    return out


def simulate(
    cfg: ExperimentConfig,
    kind: BaselineKind,
    seed_data: Sequence[SeedData],
    seeds: Sequence[int],
    budgets: Sequence[float],
    n_bs: int,
) -> RunResult:
    """Run one baseline for every (seed, budget) pair on the shared seed data."""
    kind = BaselineKind(kind)
    dem = np.stack([sd.demands for sd in seed_data])  # (S, T, B, U, F)
    assoc = np.stack([sd.association for sd in seed_data])
    n_seeds, horizon, _, n_users, n_tiles = dem.shape
    n_bud = len(budgets)
    n_rep = n_seeds * n_bud
    n_rows = n_rep * n_bs
    ocfg = optimizer_config(cfg, kind, horizon)
    dp = cfg.delay.params()
    t_r, t_fl = rendering_time(dp), fetch_time(dp)
    budget_rows = np.repeat(np.tile(np.asarray(budgets, dtype=float), n_seeds), n_bs)

    rates = None
    if seed_data[0].rate_unicast is not None:
        pick = "rate_multicast" if kind.delay_aware else "rate_unicast"
        rates = np.stack([getattr(sd, pick) for sd in seed_data])
    if kind.delay_aware and rates is None:
        raise ConfigError("delay-aware baselines need channel rate tables")

    neighbors = neighbor_sets(n_bs, cfg.network.topology)
    if kind == BaselineKind.FEDAVG:
        state = init_fedavg(n_bs, n_users, n_tiles, np.tile(np.asarray(budgets, dtype=float), n_seeds), ocfg, n_rep)
    else:
        table, mask = neighbor_table(neighbors, nearest_only=kind == BaselineKind.FIXED_RHO_HALF)
        big_table = np.concatenate([table + r * n_bs for r in range(n_rep)])
        big_mask = np.tile(mask, (n_rep, 1))
        frozen = {
            BaselineKind.RHO_ONLY: FrozenWeights(sigma=True, upsilon=True),
            BaselineKind.SIGMA_ONLY: FrozenWeights(rho=True, upsilon=True),
            BaselineKind.FIXED_RHO_HALF: FrozenWeights(True, True, True),
            BaselineKind.FIXED_SIGMA_HALF: FrozenWeights(True, True, True),
        }.get(kind, FrozenWeights())
        rho0 = None
        if kind == BaselineKind.FIXED_RHO_HALF:
            rho0 = np.full(table.shape[1], 1.0 / table.shape[1])
        sigma0 = np.full(2, 0.5) if kind == BaselineKind.FIXED_SIGMA_HALF else None
        state = init_network(
            big_table, big_mask, n_users, n_tiles, budget_rows, ocfg,
            association=_rows(assoc[:, 0], n_bud), frozen=frozen, sigma=sigma0, rho=rho0,
        )

    shape = (n_seeds, n_bud, horizon, n_bs)
    hit = np.empty(shape)
    delay = np.full(shape, np.nan)
    pac = np.zeros(shape)
    bits = np.empty(shape)
    stat = np.empty(shape)
    infeasible = np.zeros(shape, dtype=bool)

    for t in range(horizon):
        d_t = _rows(dem[:, t], n_bud)
        delays = None
        if kind.delay_aware:
            req = dem[:, t] > 0
            t_w = dp.content_bits / (dp.compression * np.where(req, rates[:, t], 1.0))
            a, r = delay_halfspace(req, t_w, t_fl, dp.threshold)
            delays = DelayInputs(_rows(a, n_bud), _rows(r, n_bud))
        if kind == BaselineKind.FEDAVG:
            m = fedavg_round(state, d_t, ocfg)
        else:
            m = dpfl_round(state, d_t, ocfg, association=_rows(assoc[:, t], n_bud), delays=delays)
        hit[:, :, t] = m.cache_hit.reshape(n_seeds, n_bud, n_bs)
        bits[:, :, t] = m.grad_bits_sent.reshape(n_seeds, n_bud, n_bs)
        stat[:, :, t] = m.stationarity.reshape(n_seeds, n_bud, n_bs)
        infeasible[:, :, t] = m.infeasible.reshape(n_seeds, n_bud, n_bs)
        if m.pac_error is not None:
            pac[:, :, t] = m.pac_error.reshape(n_seeds, n_bud, n_bs)
        if rates is not None:
            delay[:, :, t] = _mean_delay(m.deployed.reshape(n_seeds, n_bud, n_bs, n_users, n_tiles), dem[:, t], rates[:, t], dp, t_r, t_fl)

    best = _hindsight_curve(quality_weights(dem, ocfg.floor), budgets)
    regret = best - np.cumsum(hit, axis=2)
    return RunResult(
        baseline=kind.value,
        seeds=list(seeds),
        budgets=[float(b) for b in budgets],
        cache_hit=hit,
        avg_delay=delay,
        regret=regret,
        pac_error=pac,
        grad_bits=bits,
        stationarity=stat,
        infeasible=infeasible,
        deployed_last=m.deployed.reshape(n_seeds, n_bud, n_bs, n_users, n_tiles).copy(),
    )


def _rows(per_seed: np.ndarray, n_bud: int) -> np.ndarray:
    """(S, B, ...) -> (S * nB * B, ...) with the budget copies in between."""
    s, b = per_seed.shape[:2]
    rest = per_seed.shape[2:]
    return np.broadcast_to(per_seed[:, None], (s, n_bud, b) + rest).reshape((s * n_bud * b,) + rest)


def _mean_delay(deployed, demands, rates, dp, t_r, t_fl) -> np.ndarray:
    """Mean total delay over requested pairs: (S, nB, B), NaN where nothing is requested."""
    req = demands > 0  # (S, B, U, F)
    t_w = dp.content_bits / (dp.compression * np.where(req, rates, 1.0))
    total = t_r + t_w[:, None] + (1.0 - deployed) * t_fl
    n = req.sum(axis=(-2, -1))[:, None]
    s = np.sum(np.where(req[:, None], total, 0.0), axis=(-2, -1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, s / np.maximum(n, 1), np.nan)


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: Dict[str, RunResult]

    def summary(self) -> dict:
        out = {}
        for name, run in self.runs.items():
            entry = {}
            for j, budget in enumerate(run.budgets):
                stats = {}
                for metric, arr in (
                    ("cache_hit", run.per_seed("cache_hit")[:, j]),
                    ("avg_delay", run.per_seed("avg_delay")[:, j]),
                    ("final_regret", run.regret[:, j, -1].sum(axis=-1)),
                    ("final_loss", run.loss[:, j, -1].mean(axis=-1)),
                    ("grad_bits_total", run.grad_bits[:, j].sum(axis=(1, 2))),
                    ("infeasible_fraction", run.infeasible[:, j].mean(axis=(1, 2))),
                ):
                    stats[metric] = _mean_std(arr)
                entry[_fmt(budget)] = stats
            out[name] = entry
        return out


def _fmt(x) -> str:
    return f"{x:g}" if isinstance(x, float) else str(x)


def _mean_std(values) -> dict:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"mean": None, "std": None}
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return {"mean": float(np.mean(v)), "std": std}


def _run_units(units, threads: int):
    if threads <= 1 or len(units) <= 1:
        return [u() for u in units]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda u: u(), units))


def prepare_seeds(cfg: ExperimentConfig, grid: TileGrid, n_bs: int, horizon: int) -> List[SeedData]:
    return [build_seed_data(cfg, s, grid, n_bs, horizon, rates=True) for s in cfg.seeds]


def run_experiment(
    cfg: ExperimentConfig,
    budgets: Optional[Sequence[float]] = None,
    output: Optional[str] = None,
    seed_data: Optional[List[SeedData]] = None,
) -> ExperimentResult:
    """Simulate every configured baseline; write per-slot CSV and a JSON summary.

    ``output=None`` uses ``cfg.output``; pass ``output=""`` to skip writing.
    """
    cfg.validate()
    grid = cfg.grid.tile_grid()
    n_bs = cfg.network.n_bs
    budgets = [cfg.network.cache_size] if budgets is None else list(budgets)
    if seed_data is None:
        seed_data = prepare_seeds(cfg, grid, n_bs, cfg.optimizer.horizon)
    units = [
        (lambda k=k: simulate(cfg, BaselineKind(k), seed_data, cfg.seeds, budgets, n_bs))
        for k in cfg.baselines
    ]
    runs = dict(zip(cfg.baselines, _run_units(units, cfg.threads)))
    result = ExperimentResult(cfg, runs)
    out = cfg.output if output is None else output
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(result, path / "metrics.csv")
        with open(path / "summary.json", "w") as fh:
            json.dump(result.summary(), fh, indent=2)
    return result


def write_metrics_csv(result: ExperimentResult, path) -> int:
    """One row per (baseline, seed, cache size, slot, BS); returns the row count."""
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for name, run in result.runs.items():
            loss = run.loss
            s_n, b_n, t_n, bs_n = run.cache_hit.shape
            for si in range(s_n):
                for bi in range(b_n):
                    for t in range(t_n):
                        for b in range(bs_n):
                            ix = (si, bi, t, b)
                            delay = run.avg_delay[ix]
                            writer.writerow([
                                name, run.seeds[si], _fmt(run.budgets[bi]), t, b,
                                repr(float(run.cache_hit[ix])),
                                "" if not np.isfinite(delay) else repr(float(delay)),
                                repr(float(run.regret[ix])),
                                repr(float(loss[ix])),
                                repr(float(run.pac_error[ix])),
                                int(run.grad_bits[ix]),
                                repr(float(run.stationarity[ix])),
                                int(run.infeasible[ix]),
                            ])
                            n += 1
    return n


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------


def sweep(cfg: ExperimentConfig, axis: str, output: Optional[str] = None) -> List[dict]:
    """One simulation per axis value and baseline; tidy rows per (value, baseline, seed).

    Writes ``sweep_<axis>.csv`` and ``sweep_<axis>.json`` (mean and sample
    std over seeds) unless ``output=""``.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    cfg.validate()
    values = list(getattr(cfg.sweep, axis))
    if len(values) < 2:
        raise ConfigError(f"sweep over {axis} needs at least two values")

    base_grid = cfg.grid
    rows: List[dict] = []
    if axis == "cache_size":
        grid = base_grid.tile_grid()
        seeds = prepare_seeds(cfg, grid, cfg.network.n_bs, cfg.optimizer.horizon)
        units = [
            (lambda k=k: simulate(cfg, BaselineKind(k), seeds, cfg.seeds, values, cfg.network.n_bs))
            for k in cfg.baselines
        ]
        for run in _run_units(units, cfg.threads):
            for j, c in enumerate(values):
                rows += _sweep_rows(axis, c, run, j, cfg.network.n_bs, c, grid, cfg.optimizer.horizon)
    else:
        for value in values:
            n_bs, grid, horizon = cfg.network.n_bs, base_grid.tile_grid(), cfg.optimizer.horizon
            if axis == "bs_count":
                n_bs = int(value)
            elif axis == "tile_grid":
                grid = TileGrid(int(value[0]), int(value[1]), base_grid.fov_width_deg, base_grid.fov_height_deg)
            else:
                horizon = int(value)
            seeds = prepare_seeds(cfg, grid, n_bs, horizon)
            units = [
                (lambda k=k: simulate(cfg, BaselineKind(k), seeds, cfg.seeds, [cfg.network.cache_size], n_bs))
                for k in cfg.baselines
            ]
            for run in _run_units(units, cfg.threads):
                rows += _sweep_rows(axis, value, run, 0, n_bs, cfg.network.cache_size, grid, seeds[0].horizon)

    out = cfg.output if output is None else output
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        write_rows(path / f"sweep_{axis}.csv", rows, SWEEP_COLUMNS)
        with open(path / f"sweep_{axis}.json", "w") as fh:
            json.dump(summarize_rows(rows), fh, indent=2)
    return rows


def _sweep_rows(axis, value, run: RunResult, j, n_bs, cache_size, grid: TileGrid, horizon) -> List[dict]:
    hit = run.per_seed("cache_hit")[:, j]
    delay = run.per_seed("avg_delay")[:, j]
    stat = run.per_seed("stationarity")[:, j]
    rows = []
    for si, seed in enumerate(run.seeds):
        rows.append({
            "axis": axis,
            "value": _value_label(value),
            "baseline": run.baseline,
            "seed": seed,
            "n_bs": n_bs,
            "cache_size": cache_size,
            "grid": f"{grid.n_cols}x{grid.n_rows}",
            "tile_ratio": grid.tile_ratio,
            "horizon": horizon,
            "mean_cache_hit": float(hit[si]),
            "mean_delay_s": float(delay[si]),
            "final_regret": float(run.regret[si, j, -1].sum()),
            "final_loss": float(run.loss[si, j, -1].mean()),
            "mean_stationarity": float(stat[si]),
            "grad_bits_total": int(run.grad_bits[si, j].sum()),
            "infeasible_fraction": float(run.infeasible[si, j].mean()),
        })
    return rows


def _value_label(value) -> str:
    if isinstance(value, (list, tuple)):
        return "x".join(str(int(v)) for v in value)
    return _fmt(float(value)) if isinstance(value, float) else str(value)


def summarize_rows(rows: List[dict]) -> dict:
    """Mean and sample std over seeds per (value, baseline)."""
    groups: Dict[tuple, List[dict]] = {}
    for r in rows:
        groups.setdefault((r["value"], r["baseline"]), []).append(r)
    out: Dict[str, dict] = {}
    for (value, baseline), items in groups.items():
        out.setdefault(str(value), {})[baseline] = {
            m: _mean_std([it[m] for it in items])
            for m in ("mean_cache_hit", "mean_delay_s", "final_regret", "final_loss", "mean_stationarity")
        }
    return out


def write_rows(path, rows: List[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for r in rows:
            writer.writerow({c: _cell(r[c]) for c in columns})


def _cell(v):
    if isinstance(v, float):
        return "" if not math.isfinite(v) else repr(v)
    return v


def read_rows(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --------------------------------------------------------------------------
# Convergence fits
# --------------------------------------------------------------------------


def running_mean(series) -> np.ndarray:
    """Mean of the first t entries, for every t."""
    s = np.asarray(series, dtype=float)
    return np.cumsum(s) / np.arange(1, s.size + 1)


def loglog_slope(series, t_min: int = 100, t_max: Optional[int] = None, n_points: int = 200):
    """Least-squares fit ``log10 y = a + slope * log10 t`` over ``t in [t_min, t_max]``.

    ``series[k]`` is the value at iteration ``t = k + 1``.  The fit uses up
    to ``n_points`` log-spaced iterations so every decade weighs the same;
    nonpositive values are skipped.  Returns ``(slope, intercept)``.
    """
    y = np.asarray(series, dtype=float)
    t_max = y.size if t_max is None else min(t_max, y.size)
    if t_max < t_min:
        raise ValueError(f"series of length {y.size} is shorter than the fit start {t_min}")
    t = np.unique(np.round(np.geomspace(t_min, t_max, n_points)).astype(int))
    v = y[t - 1]
    ok = np.isfinite(v) & (v > 0)
    if ok.sum() < 3:
        raise ValueError("fewer than three positive points to fit")
    slope, intercept = np.polyfit(np.log10(t[ok]), np.log10(v[ok]), 1)
    return float(slope), float(intercept)


def convergence_report(sign_loss, full_loss, t_min: int = 100, smooth: bool = True) -> dict:
    """Power-law slopes of two loss curves, their difference and mean log offset.

    With ``smooth`` the curves are replaced by their running means first.
    """
    a = np.asarray(sign_loss, dtype=float)
    b = np.asarray(full_loss, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("loss series must be 1-D and of equal length")
    if a.size < 100:
        raise ValueError(f"loss series need at least 100 points, got {a.size}")
    if smooth:
        a, b = running_mean(a), running_mean(b)
    t_min = min(t_min, a.size)
    s_sign, i_sign = loglog_slope(a, t_min)
    s_full, i_full = loglog_slope(b, t_min)
    t = np.unique(np.round(np.geomspace(t_min, a.size, 200)).astype(int))
    ok = (a[t - 1] > 0) & (b[t - 1] > 0)
    offset = float(np.mean(np.log10(a[t - 1][ok]) - np.log10(b[t - 1][ok]))) if ok.any() else math.nan
    return {
        "slope_sign": s_sign,
        "slope_full": s_full,
        "slope_diff": s_sign - s_full,
        "offset_log10": offset,
        "intercept_sign": i_sign,
        "intercept_full": i_full,
    }
