"""Slot-level wireless delivery model.

Each BS serves its requested (user, tile) pairs either one pair per group
(unicast) or one group per tile shared by every requesting user
(multicast).  Groups of a BS are given orthogonal equal shares of the
bandwidth.  A unicast beam is maximum-ratio toward its user; a multicast
beam is the candidate with the best worst-member gain among the normalized
mean channel, the principal eigenvector of the members' channel Gram matrix
and each member's own maximum-ratio beam.  Interference comes only from other BSs, scaled by a per-link gain.

Delay of a requested pair::

    T(r) + T(w) + (1 - phi) * T(fl)

with rendering ``T(r) = f / F``, wireless ``T(w) = C / (C^R * R)`` and
fronthaul fetch ``T(fl) = C / (C^R * R(fl))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import _values


@dataclass(frozen=True)
class DelayParams:
    """Rendering, content and fronthaul constants (SI units)."""

    cycles_per_bit: float = 1e7
    gpu_freq: float = 1e9
    content_bits: float = 1e6
    compression: float = 2.0
    fetch_rate: float = 1e7
    threshold: float = 0.06

    def __post_init__(self):
        for name in ("cycles_per_bit", "gpu_freq", "content_bits", "fetch_rate", "threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.compression < 1:
            raise ValueError("compression ratio must be at least 1")


@dataclass(frozen=True)
class ChannelParams:
    """Antennas, bandwidth, transmit and noise power, cross-BS gain."""

    antennas: int = 4
    bandwidth_hz: float = 1e8
    power_w: float = 1.0
    noise_w: float = 0.1
    interference_gain: float = 0.1

    def __post_init__(self):
        if self.antennas < 1:
            raise ValueError("need at least one antenna")
        if self.bandwidth_hz <= 0 or self.power_w <= 0 or self.noise_w <= 0:
            raise ValueError("bandwidth, power and noise must be positive")
        if self.interference_gain < 0:
            raise ValueError("interference gain must be nonnegative")


@dataclass
class DeliveryGroups:
    """Partition of one BS's requested pairs into multicast and unicast groups."""

    multicast: list = field(default_factory=list)
    unicast: list = field(default_factory=list)

    def pairs(self) -> list:
        out = [(u, f) for f, users in self.multicast for u in users]
        out += [(u, f) for f, u in self.unicast]
        return out

    def group_of(self, user: int, tile: int):
        """``("multicast", index)`` or ``("unicast", index)`` holding the pair."""
        for j, (f, users) in enumerate(self.multicast):
            if f == tile and user in users:
                return "multicast", j
        for j, (f, u) in enumerate(self.unicast):
            if f == tile and u == user:
                return "unicast", j
        raise KeyError(f"user {user} is not served tile {tile}")

    def __len__(self) -> int:
        return len(self.multicast) + len(self.unicast)


def group_users(demands, threshold: float = 0.0, multicast: bool = True) -> DeliveryGroups:
    """Group requesting users per tile; ``d > threshold`` counts as a request.

    A tile wanted by two or more users becomes one multicast group; with
    ``multicast=False`` every request is its own unicast group.
    """
    d = _values(demands)
    groups = DeliveryGroups()
    for f in range(d.shape[1]):
        users = [int(u) for u in np.flatnonzero(d[:, f] > threshold)]
        if multicast and len(users) >= 2:
            groups.multicast.append((f, frozenset(users)))
        else:
            groups.unicast.extend((f, u) for u in users)
    return groups


@dataclass
class ChannelRealization:
    """Fading, beams and noise of one slot.

    ``h[b, u, f]`` is the antenna vector from BS b to user u for tile f (the
    same draw serves as ``g`` for unicast pairs).  ``v[b]`` and ``w[b]`` hold
    one unit-norm beam per multicast and unicast group of ``groups[b]``.
    """

    h: np.ndarray
    groups: list
    v: list
    w: list
    noise_power: np.ndarray
    power: float = 1.0
    interference_gain: float = 0.0

    @property
    def g(self) -> np.ndarray:
        return self.h


def _fading(rng: np.random.Generator, shape) -> np.ndarray:
    # unit variance per complex dimension: E|h_a|^2 = 1
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _mrt(vectors: np.ndarray) -> np.ndarray:
    c = vectors.mean(axis=0)
    n = np.linalg.norm(c)
    return c / n if n > 0 else c


def multicast_beam(vectors: np.ndarray) -> np.ndarray:
    """Max-min gain beam for the (n, A) member channels, chosen from a candidate set."""
    vectors = np.asarray(vectors)
    if vectors.shape[0] == 1:
        return _mrt(vectors)
    gram = vectors.T @ vectors.conj()
    _, vecs = np.linalg.eigh(gram)
    cands = [_mrt(vectors), vecs[:, -1]] + [_mrt(v[None]) for v in vectors]
    worst = [np.min(np.abs(vectors.conj() @ c) ** 2) for c in cands]
    return cands[int(np.argmax(worst))]


def sample_channel(
    seed,
    n_bs: int,
    n_users: int,
    n_tiles: int,
    groups: Sequence[DeliveryGroups],
    antennas: int = 4,
    power: float = 1.0,
    noise: float = 0.1,
    interference_gain: float = 0.1,
) -> ChannelRealization:
    """Draw Rayleigh fading for a slot and build maximum-ratio beams."""
    if antennas < 1:
        raise ValueError("need at least one antenna")
    rng = np.random.default_rng(seed)
    h = _fading(rng, (n_bs, n_users, n_tiles, antennas))
    v, w = [], []
    for b, grp in enumerate(groups):
        v.append([multicast_beam(h[b, sorted(users), f]) for f, users in grp.multicast])
        w.append([_mrt(h[b, [u], f]) for f, u in grp.unicast])
    return ChannelRealization(
        h=h,
        groups=list(groups),
        v=v,
        w=w,
        noise_power=np.full(n_users, float(noise)),
        power=float(power),
        interference_gain=float(interference_gain),
    )


def spectral_efficiency(signal, interference, noise):
    """``log2(1 + S / (I + N))``."""
    s = np.asarray(signal, dtype=float)
    return np.log2(1.0 + s / (np.asarray(interference, dtype=float) + np.asarray(noise, dtype=float)))


def _interference(real: ChannelRealization, bs: int, user: int, tile: int) -> float:
    total = 0.0
    for b2, grp in enumerate(real.groups):
        if b2 == bs:
            continue
        beams = list(real.v[b2]) + list(real.w[b2])
        if beams:
            gains = np.abs(np.asarray(beams).conj() @ real.h[b2, user, tile]) ** 2
            total += real.interference_gain * real.power * float(np.mean(gains))
    return total


def multicast_rate(real: ChannelRealization, bs: int, user: int, group: int, tile: int) -> float:
    """Spectral efficiency (bits/s/Hz) of ``user`` in multicast group ``group`` of ``bs``."""
    f, users = real.groups[bs].multicast[group]
    if f != tile or user not in users:
        raise ValueError(f"user {user} is not in multicast group {group} for tile {tile}")
    sig = real.power * abs(np.vdot(real.h[bs, user, tile], real.v[bs][group])) ** 2
    return float(spectral_efficiency(sig, _interference(real, bs, user, tile), real.noise_power[user]))


def unicast_rate(real: ChannelRealization, bs: int, user: int, group: int, tile: int) -> float:
    """Spectral efficiency (bits/s/Hz) of ``user`` in unicast group ``group`` of ``bs``."""
    f, u = real.groups[bs].unicast[group]
    if f != tile or u != user:
        raise ValueError(f"user {user} is not in unicast group {group} for tile {tile}")
    sig = real.power * abs(np.vdot(real.g[bs, user, tile], real.w[bs][group])) ** 2
    return float(spectral_efficiency(sig, _interference(real, bs, user, tile), real.noise_power[user]))


def rendering_time(p: DelayParams) -> float:
    return p.cycles_per_bit / p.gpu_freq


def transmit_time(p: DelayParams, rate_bps):
    """``C / (C^R * R)``; a nonpositive rate is an outage and raises."""
    r = np.asarray(rate_bps, dtype=float)
    if np.any(r <= 0) or not np.all(np.isfinite(r)):
        raise ValueError("transmission rate must be positive (outage)")
    t = p.content_bits / (p.compression * r)
    return float(t) if t.ndim == 0 else t


def fetch_time(p: DelayParams) -> float:
    return p.content_bits / (p.compression * p.fetch_rate)


def total_delay(p: DelayParams, rate_bps, cached):
    """Rendering + wireless + the uncached share of the fronthaul fetch."""
    c = np.asarray(cached, dtype=float)
    out = rendering_time(p) + transmit_time(p, rate_bps) + (1.0 - c) * fetch_time(p)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# Vectorized per-slot rate table
# --------------------------------------------------------------------------


def sample_fading(rng: np.random.Generator, n_bs: int, n_users: int, n_tiles: int, antennas: int) -> np.ndarray:
    """(B, U, F, A) Rayleigh draw, the same layout :func:`sample_channel` uses."""
    return _fading(rng, (n_bs, n_users, n_tiles, antennas))


def _unit(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, n, out=np.zeros_like(x), where=n > 0)


def _multicast_beams(h: np.ndarray, req: np.ndarray) -> np.ndarray:
    """(B, F, A) beams of :func:`multicast_beam` for every requested tile."""
    n_bs, n_users, n_tiles, n_ant = h.shape
    counts = req.sum(axis=1)
    hm = np.where(req[..., None], h, 0.0).transpose(0, 2, 1, 3)  # (B, F, U, A)
    centroid = _unit(hm.sum(axis=2) / np.maximum(counts, 1)[..., None])
    gram = np.einsum("bfua,bfuc->bfac", hm, hm.conj())
    _, vecs = np.linalg.eigh(gram)
    principal = vecs[..., -1]
    own = _unit(h.transpose(0, 2, 1, 3))  # (B, F, U, A)
    cands = np.concatenate([centroid[:, :, None], principal[:, :, None], own], axis=2)
    gains = np.abs(np.einsum("bfua,bfca->bfcu", hm.conj(), cands)) ** 2
    member = req.transpose(0, 2, 1)[:, :, None, :]
    worst = np.min(np.where(member, gains, np.inf), axis=-1)
    # candidate order matches multicast_beam; non-member own beams are excluded
    worst[..., 2:] = np.where(req.transpose(0, 2, 1), worst[..., 2:], -np.inf)
    single = counts == 1
    worst[..., 1] = np.where(single, -np.inf, worst[..., 1])
    best = np.argmax(worst, axis=-1)
    return np.take_along_axis(cands, best[..., None, None], axis=2)[:, :, 0]


def slot_rates(
    h: np.ndarray,
    requested: np.ndarray,
    params: ChannelParams,
    multicast: bool,
) -> np.ndarray:
    """Rate in bits/s of every requested pair at its serving BS.

    ``h`` is the (B, U, F, A) fading of the slot and ``requested`` the
    (B, U, F) boolean request mask with rows of non-served users False.
    Returns a (B, U, F) array, zero where nothing is requested.  Equivalent
    to grouping with :func:`group_users`, beams from :func:`sample_channel`
    and :func:`multicast_rate` / :func:`unicast_rate`, with each BS's
    bandwidth split equally over its groups.
    """
    req = np.asarray(requested, dtype=bool)
    n_bs, n_users, n_tiles = req.shape
    h = np.asarray(h)
    if h.shape[:3] != req.shape:
        raise ValueError(f"fading {h.shape} does not match requests {req.shape}")

    # beams: one per (b, u, f) in unicast, one per (b, f) in multicast
    if multicast:
        counts = req.sum(axis=1)
        beams = _multicast_beams(h, req)
        active = counts > 0  # (B, F)
        n_groups = active.sum(axis=1)
        signal = np.abs(np.einsum("bufa,bfa->buf", h.conj(), beams)) ** 2
        # interference seen through b2's channel, averaged over b2's beams
        cross = np.abs(np.einsum("cufa,cga->cufg", h.conj(), beams)) ** 2
        cross_mean = np.einsum("cufg,cg->cuf", cross, active) / np.maximum(n_groups, 1)[:, None, None]
    else:
        norm = np.linalg.norm(h, axis=-1)
        signal = norm**2
        n_groups = req.sum(axis=(1, 2))
        beams = h / np.maximum(norm, 1e-300)[..., None]
        # mean over b2's unicast beams of |h[b2, u, f]^H w|^2
        flat_beams = beams.reshape(n_bs, -1, h.shape[-1])
        flat_req = req.reshape(n_bs, -1)
        cross = np.abs(np.einsum("cufa,cga->cufg", h.conj(), flat_beams)) ** 2
        cross_mean = np.einsum("cufg,cg->cuf", cross, flat_req) / np.maximum(n_groups, 1)[:, None, None]

    has_beams = (n_groups > 0).astype(float)
    total_cross = np.sum(cross_mean * has_beams[:, None, None], axis=0)
    interference = params.interference_gain * params.power_w * (total_cross[None] - cross_mean * has_beams[:, None, None])
    eff = spectral_efficiency(params.power_w * signal, interference, params.noise_w)
    share = params.bandwidth_hz / np.maximum(n_groups, 1)
    return np.where(req, share[:, None, None] * eff, 0.0)
