"""Experiment configuration, simulation loop, sweeps, reports and CLI."""

from .config import ALL_BASELINES, BaselineKind, ConfigError, ExperimentConfig
from .report import FIGURE_COLUMNS, ReportError, load_sweeps, report
from .runner import (
    ExperimentResult,
    RunResult,
    build_seed_data,
    convergence_report,
    loglog_slope,
    run_experiment,
    simulate,
    sweep,
)

__all__ = [
    "ALL_BASELINES",
    "BaselineKind",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "FIGURE_COLUMNS",
    "ReportError",
    "RunResult",
    "build_seed_data",
    "convergence_report",
    "load_sweeps",
    "loglog_slope",
    "report",
    "run_experiment",
    "simulate",
    "sweep",
]
