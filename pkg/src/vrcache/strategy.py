"""Weighted strategy combination and the feasibility projections.

A BS strategy is built in three layers: a temporal mix of its last ``tau``
strategies (weights ``sigma``), a mix across co-located users (``upsilon``)
and a mix across neighboring BSs (``rho``).  Every weight family is a
per-(i, f) vector on a probability simplex.

All projections are Euclidean and vectorized over leading batch axes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import CachingStrategy, DimensionError, _values


# --------------------------------------------------------------------------
# Projections
# --------------------------------------------------------------------------


def project_probability_simplex(v, axis: int = -1, mask=None) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = 1}`` along ``axis``.

    ``mask`` (broadcastable to ``v``) restricts the support; masked-out
    coordinates are returned as 0.  Rows already on the simplex come back
    unchanged.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("cannot project an empty vector onto the simplex")
    if not np.all(np.isfinite(v)):
        raise ValueError("simplex projection needs finite input")
    # simplex axis first: every reduction below then runs over whole slabs
    x = np.ascontiguousarray(np.moveaxis(v, axis, 0))
    valid = None
    if mask is not None:
        valid = np.moveaxis(np.broadcast_to(np.asarray(mask, dtype=bool), v.shape), axis, 0)
        if not np.all(valid.any(axis=0)):
            raise ValueError("simplex support is empty for some row")
        x = np.where(valid, x, 0.0)
    # Michelot's active-set iteration: drop entries below the current
    # threshold until the active set is stable; exact after at most n passes
    active = np.ones(x.shape, dtype=bool) if valid is None else np.array(valid)
    for _ in range(x.shape[0]):
        theta = (np.sum(np.where(active, x, 0.0), axis=0) - 1.0) / np.sum(active, axis=0)
        keep = active & (x > theta)
        if np.array_equal(keep, active):
            break
        active = keep
    out = np.where(active, np.maximum(x - theta, 0.0), 0.0)

    # rows that were already feasible stay bit-identical
    on_simplex = (np.abs(x.sum(axis=0) - 1.0) <= 1e-12) & (x.min(axis=0) >= 0)
    if np.any(on_simplex):
        out[:, on_simplex] = x[:, on_simplex]
    return np.moveaxis(out, 0, axis)


def _capped_threshold(x: np.ndarray, budget: np.ndarray, cap: float) -> np.ndarray:
    """Shift theta with ``sum(clip(x - theta, 0, cap)) == budget`` per row.

    ``g(theta)`` is piecewise linear with breakpoints at ``x`` (slope gains
    one) and ``x - cap`` (slope loses one).  Suffix sums over the sorted
    breakpoints give ``g`` at every breakpoint; the root is then solved on
    its linear segment.
    """
    n = x.shape[-1]
    pts = np.concatenate([x, x - cap], axis=-1)
    order = np.argsort(pts, axis=-1, kind="stable")
    bp = np.take_along_axis(pts, order, axis=-1)
    sgn = np.where(order < n, 1.0, -1.0)
    # strictly-above suffix sums: g(bp_k) = sum_{j>k} s_j (bp_j - bp_k)
    w = np.cumsum((sgn * bp)[:, ::-1], axis=-1)[:, ::-1]
    c = np.cumsum(sgn[:, ::-1], axis=-1)[:, ::-1]
    w_above = np.concatenate([w[:, 1:], np.zeros((len(x), 1))], axis=-1)
    c_above = np.concatenate([c[:, 1:], np.zeros((len(x), 1))], axis=-1)
    g = w_above - bp * c_above
    k = np.clip(np.sum(g >= budget[:, None], axis=-1) - 1, 0, 2 * n - 1)
    rows = np.arange(len(x))
    g_k, slope, t_k = g[rows, k], c_above[rows, k], bp[rows, k]
    step = np.divide(g_k - budget, slope, out=np.zeros_like(g_k), where=slope > 0)
    return t_k + step


def project_capped_simplex(v, budget, cap: float = 1.0, batch_ndim: int = 0) -> np.ndarray:
    """Euclidean projection onto ``{0 <= x <= cap, sum(x) <= budget}``.

    The first ``batch_ndim`` axes index independent problems (``budget``
    broadcasts over them); all remaining axes form one vector.  Input that
    is already feasible is returned unchanged.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("capped-simplex projection needs finite input")
    batch_shape = v.shape[:batch_ndim]
    flat = v.reshape((int(np.prod(batch_shape, dtype=np.int64)), -1))
    b = np.broadcast_to(np.asarray(budget, dtype=float), batch_shape).reshape(-1)
    if np.any(b <= 0):
        raise ValueError("budget must be positive")

    clipped = np.clip(flat, 0.0, cap)
    over = clipped.sum(axis=-1) > b
    if np.any(over):
        theta = _capped_threshold(flat[over], b[over], cap)
        clipped[over] = np.clip(flat[over] - theta[:, None], 0.0, cap)
    return clipped.reshape(v.shape)


def max_linear_over_capped(a, budget, cap: float = 1.0) -> np.ndarray:
    """``max a.x`` over the capped simplex, per row of a 2-D ``a``."""
    a = np.asarray(a, dtype=float)
    s = -np.sort(-np.maximum(a, 0.0), axis=-1)
    b = np.broadcast_to(np.asarray(budget, dtype=float), a.shape[:1])[:, None]
    fill = np.clip(b - cap * np.arange(a.shape[-1]), 0.0, cap)
    return np.sum(s * fill, axis=-1)


def project_capped_halfspace(
    v,
    budget,
    a,
    r,
    cap: float = 1.0,
    batch_ndim: int = 0,
    method: str = "lagrangian",
    tol: float = 1e-10,
    max_iter: int = 200,
):
    """Project onto ``{0 <= x <= cap, sum(x) <= budget, a.x >= r}``.

    Returns ``(x, infeasible)``.  Rows whose intersection is empty keep the
    plain capped-simplex projection and are flagged in ``infeasible``.

    ``method="lagrangian"`` bisects the multiplier of the halfspace, using
    ``x(lam) = P(v + lam * a)`` with ``P`` the capped-simplex projection;
    ``method="dykstra"`` runs Dykstra's alternating projections (``max_iter``
    sweeps, exit when the update falls below ``tol``).
    """
    if method not in ("lagrangian", "dykstra"):
        raise ValueError(f"unknown projection method {method!r}")
    v = np.asarray(v, dtype=float)
    batch_shape = v.shape[:batch_ndim]
    nb = int(np.prod(batch_shape, dtype=np.int64))
    x0 = v.reshape((nb, -1))
    av = np.broadcast_to(np.asarray(a, dtype=float), v.shape).reshape((nb, -1))
    bud = np.broadcast_to(np.asarray(budget, dtype=float), batch_shape).reshape(-1)
    rr = np.broadcast_to(np.asarray(r, dtype=float), batch_shape).reshape(-1).copy()

    base = project_capped_simplex(x0, bud, cap, batch_ndim=1)
    infeasible = max_linear_over_capped(av, bud, cap) < rr - tol
    need = (np.einsum("ij,ij->i", av, base) < rr - tol) & ~infeasible
    out = base.copy()
    if np.any(need):
        solve = _halfspace_lagrangian if method == "lagrangian" else _halfspace_dykstra
        out[need] = solve(x0[need], bud[need], av[need], rr[need], cap, tol, max_iter)
    return out.reshape(v.shape), infeasible.reshape(batch_shape)


def _halfspace_lagrangian(v, budget, a, r, cap, tol, max_iter):
    def x_of(lam):
        return project_capped_simplex(v + lam[:, None] * a, budget, cap, batch_ndim=1)

    def h(lam):
        return np.einsum("ij,ij->i", a, x_of(lam)) - r

    lo = np.zeros(len(v))
    hi = np.ones(len(v))
    h_lo = h(lo)
    h_hi = h(hi)
    for _ in range(200):
        short = h_hi < 0
        if not np.any(short):
            break
        lo = np.where(short, hi, lo)
        h_lo = np.where(short, h_hi, h_lo)
        hi = np.where(short, 2.0 * hi, hi)
        h_hi = np.where(short, h(hi), h_hi)
    # h is nondecreasing and piecewise linear in lam: Illinois false position
    # keeping h(lo) < 0 <= h(hi)
    scale = np.maximum(np.abs(r), 1.0)
    side = np.zeros(len(v), dtype=np.int8)
    for _ in range(max_iter):
        # a small residual alone does not pin x down when h is flat, so
        # converge on the bracket
        if np.all((h_hi <= 1e-15 * scale) | ((hi - lo) <= tol * 1e-3 * np.maximum(hi, 1.0))):
            break
        span = h_hi - h_lo
        mid = np.where(span > 0, hi - h_hi * (hi - lo) / np.where(span > 0, span, 1.0), 0.5 * (lo + hi))
        mid = np.clip(mid, lo, hi)
        stuck = (mid <= lo) | (mid >= hi)
        mid = np.where(stuck, 0.5 * (lo + hi), mid)
        hm = h(mid)
        below = hm < 0
        lo, h_lo = np.where(below, mid, lo), np.where(below, hm, h_lo)
        hi, h_hi = np.where(below, hi, mid), np.where(below, h_hi, hm)
        # halve the stale endpoint's value when the same side moves twice
        h_hi = np.where(below & (side == -1), 0.5 * h_hi, h_hi)
        h_lo = np.where(~below & (side == 1), 0.5 * h_lo, h_lo)
        side = np.where(below, -1, 1).astype(np.int8)
    return x_of(hi)


def _halfspace_dykstra(v, budget, a, r, cap, tol, max_iter):
    aa = np.einsum("ij,ij->i", a, a)
    x = v.copy()
    p = np.zeros_like(v)
    q = np.zeros_like(v)
    y = x.copy()
    for _ in range(max_iter):
        y_new = project_capped_simplex(x + p, budget, cap, batch_ndim=1)
        p = x + p - y_new
        z = y_new + q
        gap = r - np.einsum("ij,ij->i", a, z)
        step = np.divide(np.maximum(gap, 0.0), aa, out=np.zeros_like(gap), where=aa > 0)
        x_new = z + step[:, None] * a
        q = z - x_new
        # both iterates must settle, and onto the same point
        done = max(np.max(np.abs(x_new - x)), np.max(np.abs(y_new - y)), np.max(np.abs(x_new - y_new))) <= tol
        x, y = x_new, y_new
        if done:
            break
    return project_capped_simplex(x, budget, cap, batch_ndim=1)


# --------------------------------------------------------------------------
# Weight containers
# --------------------------------------------------------------------------


@dataclass
class WeightSet:
    """Temporal, user and BS weights of one BS.

    Shapes: ``sigma`` (tau, U, F), ``upsilon`` (U, U, F) with
    ``upsilon[i, j, f]`` the weight user i puts on user j, ``rho`` (K, U, F)
    with row 0 the BS itself and rows 1.. its neighbors in ascending order.
    """

    sigma: np.ndarray
    upsilon: np.ndarray
    rho: np.ndarray

    @classmethod
    def uniform(cls, tau: int, n_users: int, n_tiles: int, n_neighbors: int) -> "WeightSet":
        return cls(
            sigma=np.full((tau, n_users, n_tiles), 1.0 / tau),
            upsilon=np.full((n_users, n_users, n_tiles), 1.0 / n_users),
            rho=np.full((n_neighbors + 1, n_users, n_tiles), 1.0 / (n_neighbors + 1)),
        )

    def check(self, tol: float = 1e-9) -> None:
        for name, w, axis in (("sigma", self.sigma, 0), ("upsilon", self.upsilon, 1), ("rho", self.rho, 0)):
            if np.any(w < -tol):
                raise ValueError(f"{name} has negative weights")
            if np.max(np.abs(w.sum(axis=axis) - 1.0)) > tol:
                raise ValueError(f"{name} is off its simplex")


class StrategyHistory:
    """Ring buffer of the last ``tau`` strategies of one BS."""

    def __init__(self, tau: int, initial: Optional[Iterable] = None):
        if tau < 1:
            raise ValueError("tau must be at least 1")
        self.tau = tau
        self._items: deque = deque(maxlen=tau)
        for item in initial or ():
            self.push(item)

    def push(self, strategy) -> None:
        if isinstance(strategy, CachingStrategy) and self._items:
            last = self._items[-1]
            if isinstance(last, CachingStrategy) and strategy.slot <= last.slot:
                raise ValueError("history slots must be increasing")
        self._items.append(strategy)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def stack(self) -> np.ndarray:
        """(len, U, F) array, oldest first."""
        return np.stack([_values(s) for s in self._items])


# --------------------------------------------------------------------------
# Combinations
# --------------------------------------------------------------------------


def temporal_combine(history, sigma) -> np.ndarray:
    """``sum_t sigma[t] * phi[t]`` over the stored window (oldest first).

    ``sigma`` may be per-slot scalars (tau,) or per-entry (tau, U, F).
    """
    h = history.stack() if isinstance(history, StrategyHistory) else np.asarray(history, dtype=float)
    s = np.asarray(sigma, dtype=float)
    if s.ndim == 1:
        s = s[:, None, None]
    if s.shape[-3] != h.shape[-3]:
        raise DimensionError(f"{s.shape[-3]} temporal weights for a history of {h.shape[-3]}")
    return np.sum(s * h, axis=-3)


def user_combine(phi_tilde, upsilon, users: Optional[Sequence[int]] = None) -> np.ndarray:
    """Mix co-located users' strategies: ``bar[i,f] = sum_j ups[i,j,f] * tilde[j,f]``.

    A 1-D ``upsilon`` is one weight vector shared by every user and tile.
    With ``users`` given, weight on anyone outside ``users`` (other than the
    user itself) is an error.
    """
    phi = np.asarray(phi_tilde, dtype=float)
    ups = np.asarray(upsilon, dtype=float)
    n_users = phi.shape[-2]
    if ups.ndim == 1:
        if ups.shape[0] != n_users:
            raise DimensionError(f"{ups.shape[0]} user weights for {n_users} users")
        ups = np.broadcast_to(ups[None, :, None], (n_users, n_users, phi.shape[-1]))
    if ups.shape[-3:-1] != (n_users, n_users):
        raise DimensionError(f"user weights {ups.shape} do not match {n_users} users")
    if users is not None:
        allowed = np.zeros((n_users, n_users), dtype=bool)
        allowed[:, np.asarray(list(users), dtype=np.int64)] = True
        allowed |= np.eye(n_users, dtype=bool)
        if np.any((ups != 0) & ~allowed[..., None]):
            raise ValueError("user weights reference users not associated with this BS")
    return np.einsum("...ijf,...jf->...if", ups, phi)


def bs_combine(phi_bar_self, phi_bar_neighbors, rho, n_expected: Optional[int] = None) -> np.ndarray:
    """``rho[0] * bar_self + sum_k rho[k] * bar_neighbor[k-1]``.

    ``rho`` is (K,) or (K, U, F) with K = 1 + number of neighbors.
    ``n_expected`` is the neighbor count the topology prescribes.
    """
    own = np.asarray(phi_bar_self, dtype=float)
    nbrs = np.asarray(phi_bar_neighbors, dtype=float).reshape((-1,) + own.shape)
    r = np.asarray(rho, dtype=float)
    if n_expected is not None and nbrs.shape[0] != n_expected:
        raise ValueError(f"got {nbrs.shape[0]} neighbor strategies, topology has {n_expected}")
    if r.shape[0] != nbrs.shape[0] + 1:
        raise DimensionError(f"{r.shape[0]} BS weights for {nbrs.shape[0] + 1} strategies")
    if r.ndim == 1:
        r = r[:, None, None]
    stacked = np.concatenate([own[None], nbrs], axis=0)
    return np.sum(r * stacked, axis=0)
