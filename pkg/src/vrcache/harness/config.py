"""Experiment configuration and its TOML representation.

A config file is TOML with top-level keys ``seeds``, ``baselines``,
``output`` and ``threads`` plus the tables ``[network]``, ``[grid]``,
``[optimizer]``, ``[trace]``, ``[channel]``, ``[delay]`` and ``[sweep]``.
Every key is optional; unknown keys are rejected.  See
``demos/default.toml`` for a fully spelled-out example.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import tomli

from ..channel import ChannelParams, DelayParams
from ..core import TileGrid


class BaselineKind(str, enum.Enum):
    DPFL_ALGO1 = "dpfl_algo1"
    DPFL_ALGO2 = "dpfl_algo2"
    SGD_ALGO1 = "sgd_algo1"
    SGD_ALGO2 = "sgd_algo2"
    RHO_ONLY = "rho_only"
    SIGMA_ONLY = "sigma_only"
    FIXED_RHO_HALF = "fixed_rho_half"
    FIXED_SIGMA_HALF = "fixed_sigma_half"
    FEDAVG = "fedavg"

    @property
    def delay_aware(self) -> bool:
        return self in (BaselineKind.DPFL_ALGO2, BaselineKind.SGD_ALGO2)


ALL_BASELINES = [k.value for k in BaselineKind]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class NetworkConfig:
    n_bs: int = 3
    n_users: int = 8
    topology: str = "ring"
    handover_prob: float = 0.02
    cache_size: float = 10.0


@dataclass
class GridConfig:
    n_cols: int = 6
    n_rows: int = 4
    fov_width_deg: float = 100.0
    fov_height_deg: float = 100.0

    def tile_grid(self) -> TileGrid:
        return TileGrid(self.n_cols, self.n_rows, self.fov_width_deg, self.fov_height_deg)


@dataclass
class OptimizerSection:
    tau: int = 5
    horizon: int = 2000
    batch: Optional[int] = None
    eta: Optional[float] = None
    mu: Optional[float] = None
    nu: Optional[float] = None
    iota: Optional[float] = None
    quantize: Optional[str] = None
    sigma_penalty: float = 0.1
    penalty_delta: float = 0.05
    floor: float = 1e-6
    projection: str = "lagrangian"


@dataclass
class TraceSection:
    source: str = "synthetic"
    path: str = ""
    slot_duration: float = 1.0
    binary: bool = False
    correlation: float = 0.8
    drift_rate: float = 0.05
    n_focal: int = 0


@dataclass
class ChannelSection:
    antennas: int = 4
    bandwidth_hz: float = 1e8
    power_w: float = 1.0
    noise_w: float = 0.1
    interference_gain: float = 0.1

    def params(self) -> ChannelParams:
        return ChannelParams(**dataclasses.asdict(self))


@dataclass
class DelaySection:
    cycles_per_bit: float = 1e7
    gpu_freq: float = 1e9
    content_bits: float = 1e6
    compression: float = 2.0
    fetch_rate: float = 1e7
    threshold: float = 0.06

    def params(self) -> DelayParams:
        return DelayParams(**dataclasses.asdict(self))


@dataclass
class SweepSection:
    cache_size: List[float] = field(default_factory=lambda: [10.0, 15.0, 20.0, 25.0])
    bs_count: List[int] = field(default_factory=lambda: [2, 3, 4, 6])
    tile_grid: List[List[int]] = field(default_factory=lambda: [[6, 4], [8, 6], [10, 8], [12, 10]])
    horizon: List[int] = field(default_factory=lambda: [250, 500, 1000, 2000])


@dataclass
class ExperimentConfig:
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    baselines: List[str] = field(default_factory=lambda: list(ALL_BASELINES))
    output: str = "results"
    threads: int = 1
    network: NetworkConfig = field(default_factory=NetworkConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    trace: TraceSection = field(default_factory=TraceSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    delay: DelaySection = field(default_factory=DelaySection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def validate(self) -> "ExperimentConfig":
        """Check every field; raises :class:`ConfigError` on the first problem."""
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.baselines:
            raise ConfigError("at least one baseline is required")
        for b in self.baselines:
            if b not in ALL_BASELINES:
                raise ConfigError(f"unknown baseline {b!r}; choose from {', '.join(ALL_BASELINES)}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        net = self.network
        if net.n_bs < 1 or net.n_users < 1:
            raise ConfigError("network needs at least one BS and one user")
        if net.topology not in ("ring", "line", "full"):
            raise ConfigError(f"unknown topology {net.topology!r}")
        if not 0.0 <= net.handover_prob <= 1.0:
            raise ConfigError("handover_prob must lie in [0, 1]")
        if net.cache_size < 1:
            raise ConfigError("cache_size must be at least 1")
        opt = self.optimizer
        if opt.quantize not in (None, "sign", "full"):
            raise ConfigError("optimizer.quantize must be 'sign' or 'full'")
        if opt.tau < 1 or opt.horizon < 1:
            raise ConfigError("tau and horizon must be positive")
        tr = self.trace
        if tr.source not in ("synthetic", "file"):
            raise ConfigError(f"unknown trace source {tr.source!r}")
        if tr.source == "file":
            if not tr.path:
                raise ConfigError("trace.path is required for a file trace")
            if not Path(tr.path).is_file():
                raise ConfigError(f"trace file {tr.path!r} does not exist")
        if tr.slot_duration <= 0:
            raise ConfigError("slot_duration must be positive")
        if not 0.0 <= tr.correlation <= 1.0:
            raise ConfigError("trace.correlation must lie in [0, 1]")
        if tr.drift_rate < 0 or tr.n_focal < 0:
            raise ConfigError("drift_rate and n_focal must be nonnegative")
        try:
            self.grid.tile_grid()
            self.channel.params()
            self.delay.params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        sw = self.sweep
        for name in ("cache_size", "bs_count", "tile_grid", "horizon"):
            if not getattr(sw, name):
                raise ConfigError(f"sweep.{name} must be nonempty")
        if any(c < 1 for c in sw.cache_size) or any(b < 1 for b in sw.bs_count):
            raise ConfigError("sweep cache sizes and BS counts must be at least 1")
        if any(len(g) != 2 or min(g) < 1 for g in sw.tile_grid):
            raise ConfigError("sweep.tile_grid entries must be [n_cols, n_rows] pairs")
        if any(h < opt.tau for h in sw.horizon):
            raise ConfigError("sweep horizons must be at least tau")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        sections = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in sections:
                raise ConfigError(f"unknown config key {key!r}")
            default = getattr(cls(), key)
            if dataclasses.is_dataclass(default):
                if not isinstance(value, dict):
                    raise ConfigError(f"[{key}] must be a table")
                names = {f.name for f in dataclasses.fields(default)}
                for sub in value:
                    if sub not in names:
                        raise ConfigError(f"unknown key {key}.{sub}")
                kwargs[key] = dataclasses.replace(default, **value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path!r} not found") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with whole sections or top-level keys swapped out."""
        return dataclasses.replace(self, **sections)
