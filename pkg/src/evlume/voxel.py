"""Voxel-grid representations of event windows.

An event window becomes a dense B×H×W tensor of signed event mass.  Each
event lands at normalized bin position

    u = (t - t0) / (t1 - t0) * (B - 1)

and is split between the two nearest bins: floor(u) receives p*(1 - frac)
and ceil(u) receives the remainder, so one event always deposits exactly
|mass| = 1.  A table-driven variant generalizes the split to arbitrary
per-bin weight rows looked up by u, which is how learned timestamp
weightings are deployed without running a network.

Accumulation uses bincount over flat (bin, pixel) indices: deterministic,
order-independent for float addition per cell only in exact arithmetic,
so the accumulation order is fixed by stream order to keep reruns
bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import EventStream, SensorGeometry
from .ets import EtsConfig, suppress


@dataclass(frozen=True)
class VoxelGrid:
    """Signed event mass per (bin, row, col).

    In-memory data is float64 so single-event mass partitions stay exact
    and naive-summation cross-checks hold tightly; file serialization
    quantizes to float32.
    """

    bins: int
    geometry: SensorGeometry
    t0: int
    t1: int
    data: np.ndarray = field(repr=False)  # (B, H, W) float64, signed mass
    excluded_events: int = 0  # events outside [t0, t1], not deposited

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        expect = (self.bins, self.geometry.height, self.geometry.width)
        if data.shape != expect:
            raise ValueError(f"voxel data shape {data.shape} != {expect}")


@dataclass(frozen=True)
class WeightTable:
    """Per-normalized-timestamp bin weights: row r covers u near r/(resolution-1).

    Every row must sum to 1 within 1e-4 (one event deposits unit mass).
    """

    weights: np.ndarray  # (resolution, B) float32

    ROW_SUM_TOL = 1e-4

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        object.__setattr__(self, "weights", w)
        if w.ndim != 2 or w.shape[0] < 2 or w.shape[1] < 1:
            raise ValueError(f"weight table must be (resolution>=2, B>=1), got {w.shape}")
        sums = w.sum(axis=1, dtype=np.float64)
        bad = np.flatnonzero(np.abs(sums - 1.0) > self.ROW_SUM_TOL)
        if bad.size:
            raise ValueError(
                f"weight table row {int(bad[0])} sums to {sums[bad[0]]:.6f}, "
                f"outside 1 +/- {self.ROW_SUM_TOL}"
            )

    @property
    def resolution(self) -> int:
        return self.weights.shape[0]

    @property
    def bins(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def bilinear(cls, resolution: int, bins: int) -> "WeightTable":
        """Table whose rows sample the two-nearest-bins kernel exactly."""
        u = np.linspace(0.0, float(bins - 1), resolution)
        k = np.arange(bins)
        w = np.maximum(0.0, 1.0 - np.abs(k[None, :] - u[:, None]))
        return cls(w.astype(np.float32))

    def rows_for(self, u: np.ndarray) -> np.ndarray:
        """Nearest-row indices for normalized bin positions u in [0, B-1]."""
        span = float(self.bins - 1)
        if span == 0.0:
            return np.zeros(u.shape, dtype=np.int64)
        r = np.rint(u / span * (self.resolution - 1))
        return np.clip(r, 0, self.resolution - 1).astype(np.int64)


def _window_positions(stream: EventStream, t0: int, t1: int, bins: int):
    """Events inside [t0, t1] with their normalized positions u in [0, B-1]."""
    if t0 >= t1:
        raise ValueError(f"voxel window requires t0 < t1, got [{t0}, {t1}]")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    t = stream.t.astype(np.int64)
    inside = (t >= t0) & (t <= t1)
    u = (t[inside] - t0).astype(np.float64) / float(t1 - t0) * (bins - 1)
    excluded = int(len(stream) - inside.sum())
    return inside, u, excluded


def _empty_grid(stream, t0, t1, bins, excluded=0) -> VoxelGrid:
    g = stream.geometry
    data = np.zeros((bins, g.height, g.width), dtype=np.float64)
    return VoxelGrid(bins, g, int(t0), int(t1), data, excluded)


def _accumulate(flat_bin, pix, values, bins, geometry) -> np.ndarray:
    """Sum values into a (B, H, W) grid by flat (bin, pixel) index.

    bincount's summation order is fixed, so equal inputs give bit-equal
    grids.
    """
    cells = bins * geometry.num_pixels
    flat = flat_bin * geometry.num_pixels + pix
    acc = np.bincount(flat, weights=values, minlength=cells)
    return acc.reshape(bins, geometry.height, geometry.width)


def voxelize_bilinear(
    stream: EventStream,
    t0: int,
    t1: int,
    bins: int = 5,
    *,
    event_span_norm: bool = False,
) -> VoxelGrid:
    """Deposit each event's polarity into its two nearest time bins.

    The normalization denominator is the requested window t1 - t0, so
    equal-duration windows produce comparable grids regardless of where
    events happen to fall; pass event_span_norm=True to normalize by the
    actual first-to-last event span instead (the classic formulation).
    Events outside [t0, t1] are excluded and counted, never clamped.
    """
    inside, u, excluded = _window_positions(stream, t0, t1, bins)
    if event_span_norm:
        t = stream.t[inside].astype(np.int64)
        if t.size:
            span = int(t[-1] - t[0])
            base = int(t[0])
            u = (
                (t - base).astype(np.float64) / span * (bins - 1)
                if span > 0
                else np.zeros(t.size, dtype=np.float64)
            )
    if u.size == 0:
        return _empty_grid(stream, t0, t1, bins, excluded)

    g = stream.geometry
    pix = stream.pixel_ids()[inside]
    p = stream.p[inside].astype(np.float64)

    lo = np.floor(u).astype(np.int64)
    # u == B-1 exactly would index bin B; fold the boundary into the top bin
    lo = np.minimum(lo, bins - 1 if bins == 1 else bins - 2)
    w_lo = 1.0 - (u - lo)
    w_hi = 1.0 - w_lo  # exact complement: the pair always sums to 1.0

    if bins == 1:
        data = _accumulate(np.zeros_like(lo), pix, p, bins, g)
    else:
        flat_bin = np.concatenate([lo, lo + 1])
        flat_pix = np.concatenate([pix, pix])
        vals = np.concatenate([p * w_lo, p * w_hi])
        data = _accumulate(flat_bin, flat_pix, vals, bins, g)
    return VoxelGrid(bins, g, int(t0), int(t1), data, excluded)


def voxelize_weighted(stream: EventStream, t0: int, t1: int, table: WeightTable) -> VoxelGrid:
    """Deposit each event's polarity across all bins via a weight-table row.

    The row is chosen by nearest-neighbor lookup on the event's normalized
    position; polarity multiplies the whole row.
    """
    bins = table.bins
    inside, u, excluded = _window_positions(stream, t0, t1, bins)
    if u.size == 0:
        return _empty_grid(stream, t0, t1, bins, excluded)

    g = stream.geometry
    pix = stream.pixel_ids()[inside]
    p = stream.p[inside].astype(np.float64)

    rows = table.rows_for(u)  # (N,)
    n = u.size
    flat_bin = np.repeat(np.arange(bins, dtype=np.int64)[None, :], n, axis=0).ravel()
    flat_pix = np.repeat(pix, bins)
    vals = (table.weights[rows].astype(np.float64) * p[:, None]).ravel()
    data = _accumulate(flat_bin, flat_pix, vals, bins, g)
    return VoxelGrid(bins, g, int(t0), int(t1), data, excluded)


def ets_voxel_labels(
    stream: EventStream,
    ets_config: EtsConfig | None,
    t0: int,
    t1: int,
    bins: int = 5,
) -> VoxelGrid:
    """Voxelize the trail-suppressed stream: the training label for a
    learned timestamp weighting is simply the grid it should reproduce."""
    return voxelize_bilinear(suppress(stream, ets_config or EtsConfig()), t0, t1, bins)


def bin_axis_variance(grid: VoxelGrid, x: int, y: int) -> float:
    """Spread of |mass| across bins at one pixel: Var_k weighted by |data|.

    Zero-mass pixels return 0.  Lower values mean the pixel's events are
    concentrated in fewer adjacent bins (temporally sharper).
    """
    m = np.abs(grid.data[:, y, x]).astype(np.float64)
    total = m.sum()
    if total == 0.0:
        return 0.0
    k = np.arange(grid.bins, dtype=np.float64)
    mean = (k * m).sum() / total
    return float(((k - mean) ** 2 * m).sum() / total)
