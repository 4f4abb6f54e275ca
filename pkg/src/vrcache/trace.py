"""Head-orientation traces to per-slot tile demands.

Geometry is flat: the equirectangular frame is a 360 x 180 degree rectangle
that wraps in longitude.  Tile ``f = row * n_cols + col`` with row 0 at the
top (pitch +90) and column 0 starting at yaw -180.  A FoV is the
``fov_width x fov_height`` rectangle centered on (yaw, pitch); a window that
would cross a pole is slid back inside ``[-90, 90]`` so the FoV keeps its
full area.

Trace CSV schema (UTF-8, header required)::

    user,timestamp,yaw,pitch

``user`` is any label, ``timestamp`` seconds, ``yaw`` degrees in
``[-180, 180)`` and ``pitch`` degrees in ``[-90, 90]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional

import numpy as np

from .core import DemandMatrix, TileGrid

TRACE_HEADER = ("user", "timestamp", "yaw", "pitch")


class TraceFormatError(ValueError):
    """A trace file is empty or has a malformed row."""


@dataclass(frozen=True)
class HeadSample:
    user: int
    timestamp: float
    yaw: float
    pitch: float

    def __post_init__(self):
        if not -180.0 <= self.yaw < 180.0:
            raise ValueError(f"yaw {self.yaw} outside [-180, 180)")
        if not -90.0 <= self.pitch <= 90.0:
            raise ValueError(f"pitch {self.pitch} outside [-90, 90]")


@dataclass(frozen=True)
class SyntheticTraceConfig:
    """Focal-point random walk with correlated viewers.

    Users are split round-robin into ``n_focal`` groups, each following its
    own focal point.  ``drift_rate`` is the walk's step scale in tiles per
    slot; ``correlation`` is the chance a user looks at its group's focal
    point in a slot rather than at a uniform random orientation.
    """

    n_users: int
    n_slots: int
    grid: TileGrid
    correlation: float = 0.8
    drift_rate: float = 0.05
    seed: int = 0
    n_focal: int = 1
    binary: bool = False

    def __post_init__(self):
        if self.n_users < 1 or self.n_slots < 1 or self.n_focal < 1:
            raise ValueError("users, slots and focal groups must be positive")
        if not 0.0 <= self.correlation <= 1.0:
            raise ValueError("correlation must lie in [0, 1]")
        if self.drift_rate < 0:
            raise ValueError("drift_rate must be nonnegative")


# --------------------------------------------------------------------------
# Geometry
# --------------------------------------------------------------------------


def _interval_overlap(lo, hi, a, b):
    return np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)


def tile_fractions(yaw, pitch, grid: TileGrid) -> np.ndarray:
    """Overlap fractions for arrays of orientations; output shape ``yaw.shape + (F,)``."""
    yaw = np.asarray(yaw, dtype=float)
    pitch = np.asarray(pitch, dtype=float)
    w, h = grid.fov_width_deg, grid.fov_height_deg
    tw, th = grid.tile_width_deg, grid.tile_height_deg

    # longitude measured from -180 so columns start at 0
    start = np.mod(yaw + 180.0 - w / 2.0, 360.0)[..., None]
    col_lo = np.arange(grid.n_cols) * tw
    lon = sum(_interval_overlap(start + k * 360.0, start + k * 360.0 + w, col_lo, col_lo + tw) for k in (-1, 0, 1))

    # latitude measured downward from the top edge
    top = np.clip(90.0 - pitch - h / 2.0, 0.0, 180.0 - h)[..., None]
    row_lo = np.arange(grid.n_rows) * th
    lat = _interval_overlap(top, top + h, row_lo, row_lo + th)

    area = lat[..., :, None] * lon[..., None, :]
    return (area / grid.tile_area).reshape(yaw.shape + (grid.n_tiles,))


def orientation_to_tiles(yaw: float, pitch: float, grid: TileGrid, binary: bool = False) -> np.ndarray:
    """Fraction of every tile covered by the FoV centered on (yaw, pitch)."""
    if not -180.0 <= yaw < 180.0:
        raise ValueError(f"yaw {yaw} outside [-180, 180)")
    if not -90.0 <= pitch <= 90.0:
        raise ValueError(f"pitch {pitch} outside [-90, 90]")
    frac = tile_fractions(yaw, pitch, grid)
    return (frac > 0).astype(float) if binary else frac


# --------------------------------------------------------------------------
# CSV traces
# --------------------------------------------------------------------------


def read_head_samples(path) -> List[HeadSample]:
    """Parse a trace CSV; user labels are mapped to 0..U-1 in sorted order."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"{path}: empty file") from None
        if tuple(c.strip().lower() for c in header) != TRACE_HEADER:
            raise TraceFormatError(f"{path}:1: expected header {','.join(TRACE_HEADER)}")
        raw = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise TraceFormatError(f"{path}:{line}: expected 4 fields, got {len(row)}")
            try:
                t, yaw, pitch = (float(c) for c in row[1:])
            except ValueError:
                raise TraceFormatError(f"{path}:{line}: non-numeric field") from None
            if not all(math.isfinite(x) for x in (t, yaw, pitch)):
                raise TraceFormatError(f"{path}:{line}: non-finite field")
            if not (-180.0 <= yaw < 180.0 and -90.0 <= pitch <= 90.0):
                raise TraceFormatError(f"{path}:{line}: angle out of range")
            raw.append((row[0].strip(), t, yaw, pitch, line))
    if not raw:
        raise TraceFormatError(f"{path}: no samples")
    labels = sorted({r[0] for r in raw}, key=_label_key)
    index = {lab: i for i, lab in enumerate(labels)}
    last = {}
    samples = []
    for lab, t, yaw, pitch, line in raw:
        if t < last.get(lab, -math.inf):
            raise TraceFormatError(f"{path}:{line}: timestamps decrease for user {lab}")
        last[lab] = t
        samples.append(HeadSample(index[lab], t, yaw, pitch))
    return samples


def _label_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def load_head_trace(path, slot_duration: float, grid: TileGrid, binary: bool = False) -> List[DemandMatrix]:
    """Bucket samples into slots; each user's demand is its mean overlap vector.

    The number of slots is ``ceil(duration / slot_duration)`` (at least one);
    a user with no sample in a slot has an all-zero row.
    """
    if slot_duration <= 0:
        raise ValueError("slot_duration must be positive")
    samples = read_head_samples(path)
    t = np.array([s.timestamp for s in samples])
    users = np.array([s.user for s in samples])
    t0 = t.min()
    n_slots = max(1, math.ceil((t.max() - t0) / slot_duration - 1e-9))
    slot = np.minimum(np.floor((t - t0) / slot_duration).astype(np.int64), n_slots - 1)
    n_users = int(users.max()) + 1
    frac = tile_fractions([s.yaw for s in samples], [s.pitch for s in samples], grid)
    if binary:
        frac = (frac > 0).astype(float)
    total = np.zeros((n_slots, n_users, grid.n_tiles))
    count = np.zeros((n_slots, n_users))
    np.add.at(total, (slot, users), frac)
    np.add.at(count, (slot, users), 1.0)
    mean = total / np.maximum(count, 1.0)[..., None]
    return [DemandMatrix(mean[k], slot=k) for k in range(n_slots)]


def write_head_samples(path, samples) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for s in samples:
            writer.writerow([s.user, repr(float(s.timestamp)), repr(float(s.yaw)), repr(float(s.pitch))])


# --------------------------------------------------------------------------
# Converters for the public datasets' native layouts
# --------------------------------------------------------------------------


def wrap_yaw(yaw: float) -> float:
    return (yaw + 180.0) % 360.0 - 180.0


def quaternion_to_yaw_pitch(x: float, y: float, z: float, w: float) -> tuple:
    """Yaw and pitch (degrees) of the view direction ``q * (0, 0, 1) * q^-1``.

    Convention: +z is the frame center, +x points to yaw +90 and +y up, so
    ``yaw = atan2(fx, fz)`` and ``pitch = asin(fy)``.
    """
    n = math.sqrt(x * x + y * y + z * z + w * w)
    if n == 0:
        raise ValueError("zero quaternion")
    x, y, z, w = x / n, y / n, z / n, w / n
    fx = 2.0 * (x * z + w * y)
    fy = 2.0 * (y * z - w * x)
    fz = 1.0 - 2.0 * (x * x + y * y)
    yaw = wrap_yaw(math.degrees(math.atan2(fx, fz)))
    pitch = math.degrees(math.asin(max(-1.0, min(1.0, fy))))
    return yaw, pitch


def _find_column(header, names, path):
    lowered = [h.strip().lower() for h in header]
    for name in names:
        if name in lowered:
            return lowered.index(name)
    raise TraceFormatError(f"{path}:1: missing column (one of {', '.join(names)})")


def convert_trace(input_path, fmt: str, output_path, user: Optional[str] = None) -> int:
    """Rewrite a raw dataset file into the trace schema; returns rows written.

    ``dataset1``: CSV with timestamp, yaw and pitch columns in degrees
    (aliases: ``time``/``playback time``, ``yaw``/``phi``, ``pitch``/``theta``).
    ``dataset2``: CSV with ``PlaybackTime`` and ``UnitQuaternion.{x,y,z,w}``.
    An optional ``user`` column is kept; otherwise every row gets ``user``
    (default: the input file stem).
    """
    if fmt not in ("dataset1", "dataset2"):
        raise ValueError(f"unknown trace format {fmt!r}")
    src = Path(input_path)
    label = user if user is not None else src.stem
    samples = []
    with src.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"{src}: empty file") from None
        lowered = [h.strip().lower() for h in header]
        user_col = lowered.index("user") if "user" in lowered else None
        t_col = _find_column(header, ("timestamp", "time", "playback time", "playbacktime"), src)
        if fmt == "dataset1":
            cols = (_find_column(header, ("yaw", "phi"), src), _find_column(header, ("pitch", "theta"), src))
        else:
            cols = tuple(_find_column(header, (f"unitquaternion.{a}", f"q{a}"), src) for a in "xyzw")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                t = float(row[t_col])
                vals = [float(row[c]) for c in cols]
            except (ValueError, IndexError):
                raise TraceFormatError(f"{src}:{line}: malformed row") from None
            if fmt == "dataset1":
                yaw, pitch = wrap_yaw(vals[0]), max(-90.0, min(90.0, vals[1]))
            else:
                yaw, pitch = quaternion_to_yaw_pitch(*vals)
            who = row[user_col].strip() if user_col is not None else label
            samples.append((who, t, yaw, pitch))
    if not samples:
        raise TraceFormatError(f"{src}: no samples")
    with Path(output_path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for who, t, yaw, pitch in samples:
            writer.writerow([who, repr(t), repr(yaw), repr(pitch)])
    return len(samples)


# --------------------------------------------------------------------------
# Synthetic traces
# --------------------------------------------------------------------------


def synthetic_orientations(cfg: SyntheticTraceConfig) -> tuple:
    """(n_slots, n_users) arrays of yaw and pitch."""
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid
    steps = rng.standard_normal((cfg.n_slots, cfg.n_focal, 2))
    start = np.stack([rng.uniform(-180.0, 180.0, cfg.n_focal), rng.uniform(-45.0, 45.0, cfg.n_focal)], axis=-1)
    scale = cfg.drift_rate * np.array([grid.tile_width_deg, grid.tile_height_deg])
    walk = start + np.cumsum(steps * scale, axis=0) - steps[:1] * scale
    focal_yaw = np.mod(walk[..., 0] + 180.0, 360.0) - 180.0
    # reflect the focal pitch into [-90, 90]
    p = np.mod(walk[..., 1] + 90.0, 360.0)
    focal_pitch = np.where(p > 180.0, 360.0 - p, p) - 90.0

    group = np.arange(cfg.n_users) % cfg.n_focal
    follow = rng.random((cfg.n_slots, cfg.n_users)) < cfg.correlation
    rand_yaw = rng.uniform(-180.0, 180.0, (cfg.n_slots, cfg.n_users))
    rand_pitch = rng.uniform(-90.0, 90.0, (cfg.n_slots, cfg.n_users))
    yaw = np.where(follow, focal_yaw[:, group], rand_yaw)
    pitch = np.where(follow, focal_pitch[:, group], rand_pitch)
    return yaw, pitch


def synthetic_trace(cfg: SyntheticTraceConfig) -> np.ndarray:
    """(n_slots, n_users, F) demand intensities, reproducible per seed."""
    yaw, pitch = synthetic_orientations(cfg)
    frac = tile_fractions(yaw, pitch, cfg.grid)
    return (frac > 0).astype(float) if cfg.binary else frac


def iter_demands(values: np.ndarray) -> Iterator[DemandMatrix]:
    """Wrap a (T, U, F) array as a stream of :class:`DemandMatrix`."""
    for t, row in enumerate(values):
        yield DemandMatrix(row, slot=t)
