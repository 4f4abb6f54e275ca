"""Domain types and scalar/matrix metrics for FoV caching.

The cache-hit metric weights each cached entry by a log-quality score::

    Q(phi) = sum_{i,f} phi[i, f] * log10(1 / MSE[i, f])

where the MSE compares the cached copy of a tile (held at full fidelity,
value 1) with the demand intensity ``d[i, f]`` in ``[0, 1]``.  A fully
viewed tile therefore scores ``log10(1/eps)`` and an unviewed tile scores
0, which keeps ``Q`` linear in ``phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

#: Default lower clamp on the MSE before taking ``log10(1/MSE)``.
MSE_FLOOR = 1e-6

#: Fidelity of a cached tile copy (the ``c`` in ``(c - d)**2``).
CACHED_FIDELITY = 1.0


class DimensionError(ValueError):
    """Raised when matrices that must align do not."""


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TileGrid:
    """Equirectangular N x P tiling of a 360 degree frame plus the FoV size."""

    n_cols: int
    n_rows: int
    fov_width_deg: float = 100.0
    fov_height_deg: float = 100.0

    def __post_init__(self):
        if self.n_cols < 1 or self.n_rows < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.n_cols}x{self.n_rows}")
        if not 0 < self.fov_width_deg <= 360:
            raise ValueError(f"fov width must be in (0, 360], got {self.fov_width_deg}")
        if not 0 < self.fov_height_deg <= 180:
            raise ValueError(f"fov height must be in (0, 180], got {self.fov_height_deg}")

    @property
    def n_tiles(self) -> int:
        return self.n_cols * self.n_rows

    @property
    def tile_width_deg(self) -> float:
        return 360.0 / self.n_cols

    @property
    def tile_height_deg(self) -> float:
        return 180.0 / self.n_rows

    @property
    def tile_area(self) -> float:
        return self.tile_width_deg * self.tile_height_deg

    @property
    def fov_area(self) -> float:
        return self.fov_width_deg * self.fov_height_deg

    @property
    def tile_ratio(self) -> float:
        """Tile size over FoV size, measured on the equirectangular plane."""
        return self.tile_area / self.fov_area

    def tile_index(self, row: int, col: int) -> int:
        return row * self.n_cols + col


@dataclass
class Topology:
    """Base stations, users, neighbor sets, user association and capacities.

    ``association`` is either a length-U array (static) or a (T, U) array
    giving the serving BS of every user in every slot.
    """

    n_bs: int
    n_users: int
    neighbors: Sequence[frozenset]
    association: np.ndarray
    cache_capacity: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.n_bs < 1 or self.n_users < 1:
            raise ValueError("need at least one BS and one user")
        self.neighbors = tuple(frozenset(int(m) for m in nb) for nb in self.neighbors)
        if len(self.neighbors) != self.n_bs:
            raise ValueError(f"expected {self.n_bs} neighbor sets, got {len(self.neighbors)}")
        for b, nb in enumerate(self.neighbors):
            if b in nb:
                raise ValueError(f"BS {b} lists itself as a neighbor")
            for m in nb:
                if not 0 <= m < self.n_bs:
                    raise ValueError(f"BS {b} has out-of-range neighbor {m}")
                if b not in self.neighbors[m]:
                    raise ValueError(f"neighbor relation not symmetric between {b} and {m}")
        assoc = np.asarray(self.association, dtype=np.int64)
        if assoc.ndim == 1:
            assoc = assoc[None, :]
        if assoc.ndim != 2 or assoc.shape[1] != self.n_users:
            raise ValueError(f"association must have {self.n_users} users per slot")
        if assoc.min() < 0 or assoc.max() >= self.n_bs:
            raise ValueError("association refers to a BS that does not exist")
        self.association = assoc
        if self.cache_capacity is None:
            self.cache_capacity = np.ones(self.n_bs)
        cap = np.broadcast_to(np.asarray(self.cache_capacity, dtype=float), (self.n_bs,)).copy()
        if np.any(cap < 1):
            raise ValueError("cache capacity must be at least 1 content unit per BS")
        self.cache_capacity = cap

    @property
    def max_degree(self) -> int:
        return max((len(nb) for nb in self.neighbors), default=0)

    def serving_bs(self, slot: int) -> np.ndarray:
        """Serving BS of every user in ``slot`` (the last row repeats)."""
        return self.association[min(slot, len(self.association) - 1)]

    def users_at(self, bs: int, slot: int) -> np.ndarray:
        return np.flatnonzero(self.serving_bs(slot) == bs)

    def association_mask(self, slot: int) -> np.ndarray:
        """Boolean (B, U) matrix, True where user u is served by BS b."""
        serving = self.serving_bs(slot)
        return serving[None, :] == np.arange(self.n_bs)[:, None]

    def neighbor_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded (B, K) table of {self} + neighbors and its validity mask.

        Column 0 is always the BS itself; neighbors follow in ascending order.
        """
        k = 1 + self.max_degree
        table = np.zeros((self.n_bs, k), dtype=np.int64)
        mask = np.zeros((self.n_bs, k), dtype=bool)
        for b, nb in enumerate(self.neighbors):
            row = [b] + sorted(nb)
            table[b, : len(row)] = row
            table[b, len(row):] = b
            mask[b, : len(row)] = True
        return table, mask


@dataclass(frozen=True)
class DemandMatrix:
    """U x F demand intensities for one slot; ``bs=None`` means network-wide."""

    values: np.ndarray
    slot: int = 0
    bs: Optional[int] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionError(f"demand must be a U x F matrix, got shape {v.shape}")
        if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise ValueError("demand intensities must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def restrict(self, users: np.ndarray, bs: int) -> "DemandMatrix":
        """Zero the rows of users not associated with ``bs``."""
        keep = np.zeros(self.values.shape[0], dtype=bool)
        keep[np.asarray(users, dtype=np.int64)] = True
        return DemandMatrix(np.where(keep[:, None], self.values, 0.0), self.slot, bs)


@dataclass(frozen=True)
class CachingStrategy:
    """U x F caching intensities phi in [0, 1] for one BS and slot."""

    values: np.ndarray
    slot: int = 0
    bs: Optional[int] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionError(f"strategy must be a U x F matrix, got shape {v.shape}")
        if np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
            raise ValueError("caching intensities must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    def is_feasible(self, budget: float, tol: float = 1e-9) -> bool:
        return bool(self.values.sum() <= budget + tol)


@dataclass
class MetricsRecord:
    slot: int
    bs: int
    cache_hit: float
    avg_delay: float = 0.0
    regret: float = 0.0
    pac_error: float = 0.0
    loss: float = 0.0
    grad_bits_sent: int = 0
    stationarity: float = 0.0
    infeasible: bool = False


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=float)


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------


def mse(cached, demanded):
    """Squared error between cached and demanded tile values."""
    return (np.asarray(cached, dtype=float) - np.asarray(demanded, dtype=float)) ** 2


def quality(mse_value, floor: float = MSE_FLOOR):
    """``log10(1/MSE)`` clamped to ``[0, log10(1/floor)]``."""
    if floor <= 0:
        raise ValueError("floor must be positive")
    m = np.maximum(np.asarray(mse_value, dtype=float), floor)
    q = np.maximum(-np.log10(m), 0.0)
    return float(q) if q.ndim == 0 else q


def quality_weights(demands, floor: float = MSE_FLOOR) -> np.ndarray:
    """Per-entry quality score of holding a tile copy in cache."""
    d = _values(demands)
    return np.asarray(quality(mse(CACHED_FIDELITY, d), floor))


def cache_hit(strategy, demands, floor: float = MSE_FLOOR) -> float:
    """Quality-weighted cache hit ``sum(phi * log10(1/MSE))``."""
    phi, d = _values(strategy), _values(demands)
    if phi.shape != d.shape:
        raise DimensionError(f"strategy {phi.shape} and demand {d.shape} do not match")
    return float(np.sum(phi * quality_weights(d, floor)))


def c_max(n_users: int, n_tiles: int, floor: float = MSE_FLOOR) -> float:
    """Largest attainable cache-hit value for a U x F strategy."""
    return n_users * n_tiles * math.log10(1.0 / floor)


def windowed_mean(series, tau: int) -> np.ndarray:
    """Mean of the trailing ``tau`` entries along axis 0."""
    s = np.asarray(series, dtype=float)
    if tau < 1:
        raise ValueError("window must hold at least one slot")
    return s[-tau:].mean(axis=0)


def disparity(rho_neighbors, est_hit_neighbor, est_hit_self) -> float:
    """Weighted gap between neighbor-BS and own estimated hit."""
    rho = np.asarray(rho_neighbors, dtype=float)
    if np.any(rho < 0):
        raise ValueError("weights must be nonnegative")
    gap = np.asarray(est_hit_neighbor, dtype=float) - float(est_hit_self)
    return float(np.dot(rho, gap))


def divergence(upsilon_neighbors, est_hit_peer_users, est_hit_self_user) -> float:
    """User-level counterpart of :func:`disparity`."""
    return disparity(upsilon_neighbors, est_hit_peer_users, est_hit_self_user)


def variance_window(sigma, hit_deltas) -> float:
    """``max_c |sum_t sigma_t * delta[c, t]|`` over candidate strategies c.

    ``hit_deltas`` is either one length-tau series or an (n_candidates, tau)
    array; the maximum is the empirical surrogate of the supremum.
    """
    sig = np.asarray(sigma, dtype=float)
    deltas = np.atleast_2d(np.asarray(hit_deltas, dtype=float))
    if sig.size == 0 or deltas.shape[-1] == 0:
        raise ValueError("variance needs a window of at least one slot")
    if deltas.shape[-1] != sig.size:
        raise DimensionError(f"{sig.size} weights but {deltas.shape[-1]} deltas")
    return float(np.max(np.abs(deltas @ sig)))


def regret(online_hits, hindsight_hit_per_slot) -> float:
    """Cumulative hindsight hit minus cumulative online hit."""
    return float(np.sum(hindsight_hit_per_slot) - np.sum(online_hits))


def pac_error_term(
    sigma,
    tau: int,
    delta: float,
    c_max: float,
    disparity: float = 0.0,
    divergence: float = 0.0,
    variance: float = 0.0,
    regret: float = 0.0,
) -> float:
    """Slack of the high-probability lower bound on the expected cache hit."""
    if not 0 < delta < 1:
        raise ValueError(f"confidence delta must lie in (0, 1), got {delta}")
    if tau < 1:
        raise ValueError("tau must be at least 1")
    if c_max <= 0:
        raise ValueError("c_max must be positive")
    sig = np.asarray(sigma, dtype=float).ravel()
    azuma = c_max * np.linalg.norm(sig) * math.sqrt((2.0 / tau) * math.log(1.0 / delta))
    spread = c_max * np.sum(np.abs(sig - 1.0 / tau))
    return float(azuma + disparity + variance + divergence + spread + 2.0 * regret / tau)
