"""Decentralized personalized FL caching rounds with sign-compressed gradients.

One call to :func:`dpfl_round` advances every BS of the network by one slot.
All per-BS quantities carry a leading BS axis, so a network of B stations
(or several independent replicas flattened into one larger network) is
updated with a handful of array operations.

Per slot and per BS:

1. score the deployed strategy against the revealed demand;
2. online gradient ascent on the revealed quality weights (the regret step),
   projected on the capped simplex, or on its intersection with the delay
   halfspace in delay mode;
3. each BS computes its batch gradient, quantizes it and sends it to its
   neighbors; the received payloads, weighted by ``rho``, drive a second
   projected step on the local strategy;
4. projected ascent on ``rho``, ``upsilon`` and ``sigma`` using the trailing
   mean quality as the estimate of next-slot demand;
5. the three weight families recombine the history into the strategy
   deployed in the next slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import MSE_FLOOR, CachingStrategy, DemandMatrix, DimensionError, _values, quality_weights
from .strategy import (
    WeightSet,
    project_capped_halfspace,
    project_capped_simplex,
    project_probability_simplex,
)

#: Bits per entry of an unquantized gradient message.
FULL_PRECISION_BITS = 32


@dataclass
class OptimizerConfig:
    """Learning rates, windows and modes.  Rates left as ``None`` become 1/sqrt(horizon)."""

    eta: Optional[float] = None
    mu: Optional[float] = None
    nu: Optional[float] = None
    iota: Optional[float] = None
    tau: int = 5
    horizon: int = 2000
    batch: Optional[int] = None
    quantize: str = "sign"
    delay_mode: str = "off"
    sigma_penalty: float = 0.1
    penalty_delta: float = 0.05
    floor: float = MSE_FLOOR
    projection: str = "lagrangian"

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError("tau must be at least 1")
        if self.horizon < self.tau:
            raise ValueError("horizon must be at least tau")
        default = 1.0 / math.sqrt(self.horizon)
        for name in ("eta", "mu", "nu", "iota"):
            value = getattr(self, name)
            if value is None:
                setattr(self, name, default)
            elif value <= 0:
                raise ValueError(f"learning rate {name} must be positive")
        if self.batch is None:
            self.batch = self.horizon
        if self.batch < 1:
            raise ValueError("batch must be at least 1")
        if self.quantize not in ("sign", "full"):
            raise ValueError(f"quantize must be 'sign' or 'full', got {self.quantize!r}")
        if self.delay_mode not in ("off", "constrained"):
            raise ValueError(f"delay_mode must be 'off' or 'constrained', got {self.delay_mode!r}")
        if not 0 < self.penalty_delta < 1:
            raise ValueError("penalty_delta must lie in (0, 1)")
        if self.sigma_penalty < 0:
            raise ValueError("sigma_penalty must be nonnegative")
        if self.projection not in ("lagrangian", "dykstra"):
            raise ValueError(f"unknown projection {self.projection!r}")

    @property
    def bits_per_entry(self) -> int:
        return 1 if self.quantize == "sign" else FULL_PRECISION_BITS


@dataclass(frozen=True)
class GradientMessage:
    """Gradient payload sent from one BS to one neighbor in one slot."""

    from_bs: int
    to_bs: int
    slot: int
    payload: np.ndarray
    quantized: bool = True

    def __post_init__(self):
        p = np.asarray(self.payload, dtype=float)
        if self.quantized and not np.all(np.isin(p, (-1.0, 0.0, 1.0))):
            raise ValueError("sign payload entries must be -1, 0 or +1")
        object.__setattr__(self, "payload", p)

    @property
    def bits(self) -> int:
        return int(self.payload.size * (1 if self.quantized else FULL_PRECISION_BITS))


# --------------------------------------------------------------------------
# Single-BS building blocks
# --------------------------------------------------------------------------


def local_gradient(strategy, demands, weights: Optional[WeightSet] = None, floor: float = MSE_FLOOR) -> np.ndarray:
    """Gradient of the local cache hit with respect to the newest strategy.

    Without ``weights`` this is the gradient of ``Q(phi)`` itself, i.e. the
    quality weights.  With ``weights`` the hit is taken on the combined
    strategy ``sum_i rho_self * sum_j ups[i, j] * sigma_last[j] * phi[j]``
    (the only path through which the newest local strategy enters).
    """
    phi, d = _values(strategy), _values(demands)
    if phi.shape != d.shape:
        raise DimensionError(f"strategy {phi.shape} and demand {d.shape} do not match")
    q = quality_weights(d, floor)
    if weights is None:
        return q
    self_weight = q * weights.rho[0]
    return weights.sigma[-1] * np.einsum("if,ijf->jf", self_weight, weights.upsilon)


def one_bit_quantize(g) -> np.ndarray:
    """Entrywise sign with ``sign(0) = 0``."""
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("cannot quantize a non-finite gradient")
    return np.sign(g)


def regret_min_step(prev, grad, eta: float, budget) -> CachingStrategy:
    """One projected online-gradient-ascent step on the capped simplex."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    phi = _values(prev)
    out = project_capped_simplex(phi + eta * np.asarray(grad, dtype=float), budget)
    slot = getattr(prev, "slot", 0)
    return CachingStrategy(out, slot=slot + 1, bs=getattr(prev, "bs", None))


def best_fixed_value(cumulative, budget, cap: float = 1.0) -> np.ndarray:
    """Value of the best fixed strategy for cumulative weights, per row.

    Fills the largest entries up to ``budget`` (a fractional remainder goes
    to the next entry); rows are the last axis.
    """
    w = np.asarray(cumulative, dtype=float)
    s = -np.sort(-np.maximum(w, 0.0), axis=-1)
    b = np.asarray(budget, dtype=float)[..., None]
    fill = np.clip(b - cap * np.arange(w.shape[-1]), 0.0, cap)
    return np.sum(s * fill, axis=-1)


def hindsight_optimal(window_demands: Sequence, budget: float, floor: float = MSE_FLOOR) -> CachingStrategy:
    """Best fixed strategy over a window: ones on the top-``floor(budget)`` entries.

    Ties are broken toward the lower flat index.
    """
    if len(window_demands) == 0:
        raise ValueError("hindsight window is empty")
    total = sum(quality_weights(d, floor) for d in window_demands)
    flat = total.ravel()
    k = min(int(math.floor(budget + 1e-12)), flat.size)
    order = np.argsort(-flat, kind="stable")
    phi = np.zeros_like(flat)
    phi[order[:k]] = 1.0
    return CachingStrategy(phi.reshape(total.shape), slot=getattr(window_demands[-1], "slot", 0))


def delay_halfspace(requested, t_transmit, t_fetch, t_threshold):
    """Coefficients ``(a, r)`` of the delay constraint written as ``a . phi >= r``.

    The constraint ``sum [phi*T(w) + (1-phi)*(T(w)+T(fl))] <= sum T(th)``
    over requested pairs rearranges to ``sum phi*T(fl) >= sum (T(w)+T(fl)-T(th))``.
    Arrays broadcast together; the sums run over the last two axes.
    """
    req = np.asarray(requested, dtype=bool)
    tw, tfl, tth = (np.broadcast_to(np.asarray(x, dtype=float), req.shape) for x in (t_transmit, t_fetch, t_threshold))
    a = np.where(req, tfl, 0.0)
    r = np.sum(np.where(req, tw + tfl - tth, 0.0), axis=(-2, -1))
    return a, r


# --------------------------------------------------------------------------
# Network state
# --------------------------------------------------------------------------


@dataclass
class FrozenWeights:
    """Which weight families a run keeps fixed (at their initial values)."""

    sigma: bool = False
    rho: bool = False
    upsilon: bool = False


@dataclass
class DelayInputs:
    """Per-slot delay-constraint data for every BS: ``a`` (B, U, F), ``r`` (B,)."""

    a: np.ndarray
    r: np.ndarray


@dataclass
class RoundMetrics:
    """Per-BS outputs of one round."""

    cache_hit: np.ndarray
    deployed: np.ndarray
    grad_bits_sent: np.ndarray
    stationarity: np.ndarray
    infeasible: np.ndarray
    pac_error: Optional[np.ndarray] = None
    disparity: Optional[np.ndarray] = None
    divergence: Optional[np.ndarray] = None
    variance: Optional[np.ndarray] = None
    window_regret: Optional[np.ndarray] = None


@dataclass
class NetworkState:
    """Strategies, histories and weights for every BS.

    ``nbr`` is the (B, K) table of {self} + neighbors (column 0 is self) and
    ``nbr_mask`` marks the valid columns.
    """

    history: np.ndarray
    sigma: np.ndarray
    upsilon: np.ndarray
    rho: np.ndarray
    nbr: np.ndarray
    nbr_mask: np.ndarray
    budget: np.ndarray
    deployed: np.ndarray
    frozen: FrozenWeights = field(default_factory=FrozenWeights)
    fixed_sigma: Optional[np.ndarray] = None
    fixed_rho: Optional[np.ndarray] = None
    q_window: Optional[np.ndarray] = None
    q_sum: Optional[np.ndarray] = None
    q_recent: Optional[np.ndarray] = None
    hit_recent: Optional[np.ndarray] = None
    n_seen: int = 0
    slot: int = 0

    @property
    def n_bs(self) -> int:
        return self.history.shape[0]

    @property
    def tau(self) -> int:
        return self.history.shape[1]

    @property
    def shape(self) -> tuple:
        return self.history.shape[2:]

    def weights(self, b: int) -> WeightSet:
        """Copy of the weight set of BS ``b`` (valid neighbor rows only)."""
        keep = self.nbr_mask[b]
        return WeightSet(self.sigma[b].copy(), self.upsilon[b].copy(), self.rho[b][keep].copy())

    def check(self, tol: float = 1e-9) -> None:
        """Raise if any weight family or strategy left its feasible set."""
        for name, w, axis in (("sigma", self.sigma, 1), ("upsilon", self.upsilon, 2), ("rho", self.rho, 1)):
            if np.any(w < -tol) or np.max(np.abs(w.sum(axis=axis) - 1.0)) > tol:
                raise AssertionError(f"{name} is off its simplex")
        for name, x in (("strategy", self.history[:, -1]), ("deployed", self.deployed)):
            if np.any(x < -tol) or np.any(x > 1 + tol):
                raise AssertionError(f"{name} leaves [0, 1]")
            if np.any(x.sum(axis=(1, 2)) > self.budget + tol):
                raise AssertionError(f"{name} exceeds the cache budget")


def init_network(
    nbr: np.ndarray,
    nbr_mask: np.ndarray,
    n_users: int,
    n_tiles: int,
    budget,
    cfg: OptimizerConfig,
    association: Optional[np.ndarray] = None,
    frozen: Optional[FrozenWeights] = None,
    sigma=None,
    rho=None,
) -> NetworkState:
    """Initial state: uniform strategy filling the budget, uniform weights.

    ``sigma`` (length tau) and ``rho`` (length K, row 0 = self) override the
    uniform initial weights, e.g. for fixed-weight baselines.
    """
    nbr = np.asarray(nbr, dtype=np.int64)
    nbr_mask = np.asarray(nbr_mask, dtype=bool)
    n_bs, k = nbr.shape
    if nbr_mask.shape != nbr.shape or not np.all(nbr_mask[:, 0]) or np.any(nbr[:, 0] != np.arange(n_bs)):
        raise ValueError("neighbor table must list each BS itself in column 0")
    bud = np.broadcast_to(np.asarray(budget, dtype=float), (n_bs,)).copy()
    tau = cfg.tau
    phi0 = np.minimum(1.0, bud / (n_users * n_tiles))[:, None, None] * np.ones((n_bs, n_users, n_tiles))
    history = np.repeat(phi0[:, None], tau, axis=1)

    if sigma is None:
        sig = np.full((n_bs, tau, n_users, n_tiles), 1.0 / tau)
    else:
        s = np.asarray(sigma, dtype=float)
        if s.shape != (tau,):
            raise DimensionError(f"sigma override needs {tau} entries")
        sig = np.broadcast_to(s[None, :, None, None], (n_bs, tau, n_users, n_tiles)).copy()

    if rho is None:
        r = nbr_mask / nbr_mask.sum(axis=1, keepdims=True)
    else:
        r0 = np.asarray(rho, dtype=float)
        if r0.shape != (k,):
            raise DimensionError(f"rho override needs {k} entries")
        r = np.where(nbr_mask, r0[None, :], 0.0)
    rh = np.broadcast_to(r[:, :, None, None], (n_bs, k, n_users, n_tiles)).copy()

    state = NetworkState(
        history=history,
        sigma=sig,
        upsilon=np.zeros((n_bs, n_users, n_users, n_tiles)),
        rho=rh,
        nbr=nbr,
        nbr_mask=nbr_mask,
        budget=bud,
        deployed=phi0.copy(),
        frozen=frozen or FrozenWeights(),
        fixed_sigma=sig.copy(),
        fixed_rho=rh.copy(),
        q_window=np.zeros((cfg.batch, n_bs, n_users, n_tiles)),
        q_sum=np.zeros((n_bs, n_users, n_tiles)),
        q_recent=np.zeros((tau, n_bs, n_users, n_tiles)),
        hit_recent=np.zeros((tau, n_bs)),
    )
    assoc = np.ones((n_bs, n_users), dtype=bool) if association is None else np.asarray(association, dtype=bool)
    state.upsilon = _uniform_upsilon(_user_support(assoc), n_tiles)
    state.deployed = _combine(state)
    return state


def _user_support(assoc: np.ndarray) -> np.ndarray:
    """(B, U, U) mask: user i may weight user j if j is at the BS or j == i."""
    n_users = assoc.shape[1]
    return assoc[:, None, :] | np.eye(n_users, dtype=bool)[None]


def _uniform_upsilon(support: np.ndarray, n_tiles: int) -> np.ndarray:
    w = support / support.sum(axis=2, keepdims=True)
    return np.repeat(w[..., None], n_tiles, axis=3)


def _mix(state: NetworkState):
    """Temporal and user mixes plus the gathered neighbor user-mixes."""
    tilde = np.einsum("btuf,btuf->buf", state.sigma, state.history)
    bar = np.einsum("bijf,bjf->bif", state.upsilon, tilde)
    bar_nbr = bar[state.nbr] * state.nbr_mask[:, :, None, None]
    return tilde, bar, bar_nbr


def _combine(state: NetworkState) -> np.ndarray:
    _, _, bar_nbr = _mix(state)
    av = np.einsum("bkuf,bkuf->buf", state.rho, bar_nbr)
    return project_capped_simplex(av, state.budget, batch_ndim=1)


def _sq(x: np.ndarray) -> np.ndarray:
    return np.sum(x.reshape(x.shape[0], -1) ** 2, axis=1)


def _project(v, budget, cfg: OptimizerConfig, delays: Optional[DelayInputs]):
    if delays is None:
        return project_capped_simplex(v, budget, batch_ndim=1), np.zeros(v.shape[0], dtype=bool)
    return project_capped_halfspace(
        v, budget, delays.a, delays.r, batch_ndim=1, method=cfg.projection,
        tol=1e-8 if cfg.projection == "dykstra" else 1e-10,
        max_iter=100 if cfg.projection == "dykstra" else 200,
    )


def dpfl_round(
    state: NetworkState,
    demands,
    cfg: OptimizerConfig,
    association: Optional[np.ndarray] = None,
    delays: Optional[DelayInputs] = None,
) -> RoundMetrics:
    """Advance every BS by one slot in place and return per-BS metrics.

    ``demands`` is (B, U, F) with rows of users not served by a BS zeroed;
    ``association`` is the (B, U) serving mask of the slot.
    """
    d = np.asarray(demands, dtype=float)
    if d.shape != (state.n_bs,) + state.shape:
        raise DimensionError(f"demands {d.shape} do not match the state ({state.n_bs}, {state.shape})")
    n_bs, n_users, n_tiles = d.shape
    q = quality_weights(d, cfg.floor)
    if not np.all(np.isfinite(q)):
        raise FloatingPointError(f"non-finite demand weights at slot {state.slot}")
    assoc = (d.sum(axis=2) > 0) if association is None else np.asarray(association, dtype=bool)
    eta = cfg.eta

    # 1. score the strategy that was in the cache during this slot
    deployed = state.deployed
    hit = np.einsum("buf,buf->b", deployed, q)

    # 2. regret step (online gradient ascent on the revealed weights)
    phi_r, infeasible = _project(deployed + eta * q, state.budget, cfg, delays)

    # 3. batch gradient, quantized exchange, neighbor-weighted signed step
    slot_in_window = state.n_seen % cfg.batch
    state.q_sum += q - state.q_window[slot_in_window]
    state.q_window[slot_in_window] = q
    state.n_seen += 1
    n_batch = min(state.n_seen, cfg.batch)
    g = state.q_sum / n_batch
    if not np.all(np.isfinite(g)):
        raise FloatingPointError(f"non-finite gradient at slot {state.slot}")
    payload = one_bit_quantize(g) if cfg.quantize == "sign" else g
    received = payload[state.nbr] * state.nbr_mask[:, :, None, None]
    direction = np.einsum("bkuf,bkuf->buf", state.rho, received)
    phi_new, _ = _project(phi_r + eta * direction, state.budget, cfg, delays)
    degree = state.nbr_mask.sum(axis=1) - 1
    bits = degree * n_users * n_tiles * cfg.bits_per_entry

    state.history = np.concatenate([state.history[:, 1:], phi_new[:, None]], axis=1)

    # 4. weight updates on the estimated next-slot hit (trailing-tau mean quality)
    recent_slot = (state.n_seen - 1) % cfg.tau
    state.q_recent[recent_slot] = q
    state.hit_recent[recent_slot] = hit
    n_recent = min(state.n_seen, cfg.tau)
    qbar = state.q_recent.sum(axis=0) / n_recent
    tilde, bar, bar_nbr = _mix(state)
    diag = _diagnostics(state, qbar, tilde, bar_nbr, cfg, n_recent)
    moved = np.zeros(n_bs)

    support = _user_support(assoc)
    rho_self = state.rho[:, 0]
    if state.frozen.rho:
        new_rho = state.fixed_rho
    else:
        grad_rho = qbar[:, None] * bar_nbr
        new_rho = project_probability_simplex(
            state.rho + cfg.nu * grad_rho, axis=1, mask=state.nbr_mask[:, :, None, None]
        )
        moved += _sq((new_rho - state.rho) / cfg.nu)

    if state.frozen.upsilon:
        new_ups = _uniform_upsilon(support, n_tiles)
    else:
        grad_ups = (qbar * rho_self)[:, :, None, :] * tilde[:, None, :, :]
        new_ups = project_probability_simplex(
            state.upsilon + cfg.iota * grad_ups, axis=2, mask=support[..., None]
        )
        moved += _sq((new_ups - np.where(support[..., None], state.upsilon, 0.0)) / cfg.iota)

    if state.frozen.sigma:
        new_sigma = state.fixed_sigma
    else:
        new_sigma = _sigma_step(state, qbar, rho_self, cfg)
        moved += _sq((new_sigma - state.sigma) / cfg.mu)

    state.rho, state.upsilon, state.sigma = new_rho, new_ups, new_sigma

    # 5. recombine for the next slot
    state.deployed = _combine(state)
    state.slot += 1

    stationarity = _sq((deployed - phi_r) / eta) + _sq((phi_r - phi_new) / eta) + moved
    return RoundMetrics(
        cache_hit=hit,
        deployed=deployed,
        grad_bits_sent=bits,
        stationarity=stationarity,
        infeasible=np.asarray(infeasible, dtype=bool),
        **diag,
    )


def _diagnostics(state: NetworkState, qbar, tilde, bar_nbr, cfg: OptimizerConfig, n_recent: int) -> dict:
    """Windowed estimates of the terms of the PAC error, per BS.

    Estimated hits score a strategy against the trailing mean quality
    ``qbar``; gaps are taken as (other - own), summed over entries with the
    per-entry weights.
    """
    n_bs, n_users, n_tiles = qbar.shape
    tau = cfg.tau
    own = bar_nbr[:, :1]
    disparity = np.einsum("bkuf,buf->b", state.rho[:, 1:] * (bar_nbr[:, 1:] - own), qbar)
    peer_gap = tilde[:, None, :, :] - tilde[:, :, None, :]
    divergence = np.einsum("bijf,bif,bijf->b", state.upsilon, qbar, peer_gap)
    centered = state.history - state.history.mean(axis=1, keepdims=True)
    variance = np.abs(np.einsum("btuf,buf,btuf->b", state.sigma, qbar, centered))
    window_q = state.q_recent.sum(axis=0).reshape(n_bs, -1)
    window_regret = best_fixed_value(window_q, state.budget) - state.hit_recent.sum(axis=0)
    sig = state.sigma.mean(axis=(2, 3))
    cmax = n_users * n_tiles * math.log10(1.0 / cfg.floor)
    azuma = cmax * np.linalg.norm(sig, axis=1) * math.sqrt((2.0 / tau) * math.log(1.0 / cfg.penalty_delta))
    spread = cmax * np.abs(sig - 1.0 / tau).sum(axis=1)
    pac = azuma + disparity + variance + divergence + spread + 2.0 * window_regret / tau
    return dict(
        pac_error=pac,
        disparity=disparity,
        divergence=divergence,
        variance=variance,
        window_regret=window_regret,
    )


def _sigma_step(state: NetworkState, qbar, rho_self, cfg: OptimizerConfig) -> np.ndarray:
    """Projected ascent on the temporal weights.

    The hit term is linear in sigma; the Azuma term enters through the
    gradient of ``||sigma||_2``, the variance term through its subgradient,
    and the spread term ``sum |sigma_t - 1/tau|`` by a proximal step.
    """
    tau = state.tau
    sig = state.sigma
    w = np.einsum("bif,bijf->bjf", qbar * rho_self, state.upsilon)
    grad = w[:, None] * state.history
    lam = cfg.sigma_penalty
    if lam > 0:
        azuma = math.sqrt((2.0 / tau) * math.log(1.0 / cfg.penalty_delta))
        norm = np.sqrt(np.sum(sig**2, axis=1, keepdims=True))
        grad = grad - lam * azuma * sig / np.maximum(norm, 1e-12)
        centered = state.history - state.history.mean(axis=1, keepdims=True)
        spread = np.sum(sig * centered, axis=1, keepdims=True)
        grad = grad - lam * np.sign(spread) * w[:, None] * centered
    step = sig + cfg.mu * grad
    if lam > 0:
        off = step - 1.0 / tau
        step = 1.0 / tau + np.sign(off) * np.maximum(np.abs(off) - cfg.mu * lam, 0.0)
    return project_probability_simplex(step, axis=1)


def dpfl_delay_round(
    state: NetworkState,
    demands,
    cfg: OptimizerConfig,
    delays: Optional[DelayInputs],
    association: Optional[np.ndarray] = None,
) -> RoundMetrics:
    """:func:`dpfl_round` with the strategy kept inside the delay halfspace."""
    if cfg.delay_mode != "constrained":
        raise ValueError("delay rounds need delay_mode='constrained'")
    if delays is None:
        raise ValueError("delay rounds need delay parameters for the slot")
    return dpfl_round(state, demands, cfg, association=association, delays=delays)


# --------------------------------------------------------------------------
# Global-model baseline
# --------------------------------------------------------------------------


@dataclass
class FedAvgState:
    """One strategy per network, shared by all its BSs.

    ``phi`` is (G, U, F) for G independent networks of ``n_bs`` stations;
    BS rows are laid out network by network.
    """

    phi: np.ndarray
    budget: np.ndarray
    n_bs: int
    q_window: np.ndarray
    q_sum: np.ndarray
    n_seen: int = 0
    slot: int = 0


def init_fedavg(n_bs: int, n_users: int, n_tiles: int, budget, cfg: OptimizerConfig, n_networks: int = 1) -> FedAvgState:
    bud = np.broadcast_to(np.asarray(budget, dtype=float), (n_networks,)).copy()
    phi = np.minimum(1.0, bud / (n_users * n_tiles))[:, None, None] * np.ones((n_networks, n_users, n_tiles))
    return FedAvgState(
        phi=phi,
        budget=bud,
        n_bs=n_bs,
        q_window=np.zeros((cfg.batch, n_networks, n_users, n_tiles)),
        q_sum=np.zeros((n_networks, n_users, n_tiles)),
    )


def fedavg_round(state: FedAvgState, demands, cfg: OptimizerConfig) -> RoundMetrics:
    """Deploy the shared strategy at every BS, then step it on the mean gradient."""
    d = np.asarray(demands, dtype=float)
    n_rows, n_users, n_tiles = d.shape
    n_net = state.phi.shape[0]
    if n_rows != n_net * state.n_bs:
        raise DimensionError(f"expected {n_net * state.n_bs} BS rows, got {n_rows}")
    q = quality_weights(d, cfg.floor)
    deployed = np.repeat(state.phi, state.n_bs, axis=0)
    hit = np.einsum("buf,buf->b", deployed, q)
    mean_q = q.reshape(n_net, state.n_bs, n_users, n_tiles).mean(axis=1)
    phi_r = project_capped_simplex(state.phi + cfg.eta * mean_q, state.budget, batch_ndim=1)
    slot_in_window = state.n_seen % cfg.batch
    state.q_sum += mean_q - state.q_window[slot_in_window]
    state.q_window[slot_in_window] = mean_q
    state.n_seen += 1
    g = state.q_sum / min(state.n_seen, cfg.batch)
    phi_new = project_capped_simplex(phi_r + cfg.eta * g, state.budget, batch_ndim=1)
    stat = (_sq(state.phi - phi_r) + _sq(phi_r - phi_new)) / cfg.eta**2
    state.phi = phi_new
    state.slot += 1
    return RoundMetrics(
        cache_hit=hit,
        deployed=deployed,
        grad_bits_sent=np.full(n_rows, n_users * n_tiles * FULL_PRECISION_BITS),
        stationarity=np.repeat(stat, state.n_bs),
        infeasible=np.zeros(n_rows, dtype=bool),
    )


def gradient_messages(state: NetworkState, payload: np.ndarray, slot: int, quantized: bool) -> list:
    """Explicit per-edge messages for a (B, U, F) payload (for inspection and tests)."""
    out = []
    for b in range(state.n_bs):
        for k in range(1, state.nbr.shape[1]):
            if state.nbr_mask[b, k]:
                out.append(GradientMessage(b, int(state.nbr[b, k]), slot, payload[b], quantized))
    return out
