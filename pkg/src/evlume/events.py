"""Event data model: streams, validation, slicing, grouping, density maps.

Events are timestamped (integer microseconds), signed-polarity pixel
activations. Streams are stored column-wise (t, x, y, p arrays) so that
10^7-event streams stay cheap to slice, sort and accumulate; the row view
`Event` exists for convenience and tests, not for bulk processing.

Canonical stream order is non-decreasing t with ties broken by (y, x).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np


class Event(NamedTuple):
    t: int  # microseconds
    x: int
    y: int
    p: int  # +1 or -1


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"sensor geometry must be at least 1x1, got {self.width}x{self.height}")

    @property
    def num_pixels(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class Violation:
    """First invariant violation found in a stream; violations are data, not faults."""
    index: int
    reason: str


class EventStream:
    """Ordered sequence of events over a fixed sensor geometry.

    Invariants (checked by :func:`validate`, not by the constructor):
    timestamps non-decreasing over the whole sequence, and strictly
    increasing when restricted to any single pixel.
    """

    __slots__ = ("geometry", "t", "x", "y", "p")

    def __init__(self, geometry: SensorGeometry, t, x, y, p):
        self.geometry = geometry
        self.t = np.ascontiguousarray(t, dtype=np.uint64)
        self.x = np.ascontiguousarray(x, dtype=np.uint16)
        self.y = np.ascontiguousarray(y, dtype=np.uint16)
        self.p = np.ascontiguousarray(p, dtype=np.int8)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("t, x, y, p must have equal length")

    @classmethod
    def empty(cls, geometry: SensorGeometry) -> "EventStream":
        return cls(geometry, [], [], [], [])

    @classmethod
    def from_events(cls, geometry: SensorGeometry, events) -> "EventStream":
        evs = list(events)
        return cls(
            geometry,
            [e[0] for e in evs],
            [e[1] for e in evs],
            [e[2] for e in evs],
            [e[3] for e in evs],
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    def __repr__(self) -> str:
        g = self.geometry
        return f"EventStream({len(self)} events, {g.width}x{g.height})"

    def pixel_ids(self) -> np.ndarray:
        """Flat pixel index y*width + x for every event."""
        return self.y.astype(np.int64) * self.geometry.width + self.x.astype(np.int64)

    def canonical(self) -> "EventStream":
        """Re-serialize to canonical order: sort by t, ties by (y, x), stable."""
        order = np.lexsort((self.x, self.y, self.t))
        return EventStream(self.geometry, self.t[order], self.x[order], self.y[order], self.p[order])


@dataclass(frozen=True)
class DensityMap:
    """Per-pixel event counts over a half-open time window [t_start, t_end).

    `normalized` is counts / global max count; an all-zero map normalizes
    to all zeros.
    """
    geometry: SensorGeometry
    t_start: int
    t_end: int
    counts: np.ndarray = field(repr=False)      # (H, W) int64
    normalized: np.ndarray = field(repr=False)  # (H, W) float64 in [0, 1]


def validate(stream: EventStream) -> Violation | None:
    """Check stream invariants; return the first violation or None if ok.

    Checked per event index, lowest index first; at equal index the
    precedence is: global time order, per-pixel strict order, coordinate
    bounds, polarity domain.
    """
    n = len(stream)
    if n == 0:
        return None
    candidates: list[tuple[int, str]] = []

    if n > 1:
        t = stream.t
        bad = np.flatnonzero(t[1:] < t[:-1])
        if bad.size:
            candidates.append((int(bad[0]) + 1, "timestamps non-decreasing"))

        pix = stream.pixel_ids()
        order = np.argsort(pix, kind="stable")  # stream order preserved within a pixel
        sp = pix[order]
        st = t[order]
        same = sp[1:] == sp[:-1]
        bad = np.flatnonzero(same & (st[1:] <= st[:-1]))
        if bad.size:
            idx = int(np.min(order[bad + 1]))
            candidates.append((idx, "per-pixel strictly increasing"))

    g = stream.geometry
    bad = np.flatnonzero((stream.x >= g.width) | (stream.y >= g.height))
    if bad.size:
        candidates.append((int(bad[0]), "coordinates within geometry"))

    bad = np.flatnonzero((stream.p != 1) & (stream.p != -1))
    if bad.size:
        candidates.append((int(bad[0]), "polarity in {+1, -1}"))

    if not candidates:
        return None
    idx, reason = min(candidates, key=lambda c: c[0])
    return Violation(idx, reason)


def slice_time(stream: EventStream, t0: int, t1: int) -> EventStream:
    """Events with t in [t0, t1), original order preserved.

    Requires a time-sorted stream (binary search on t).
    """
    if t0 > t1:
        raise ValueError(f"slice_time requires t0 <= t1, got {t0} > {t1}")
    lo = int(np.searchsorted(stream.t, t0, side="left"))
    hi = int(np.searchsorted(stream.t, t1, side="left"))
    return EventStream(stream.geometry, stream.t[lo:hi], stream.x[lo:hi], stream.y[lo:hi], stream.p[lo:hi])


def group_by_pixel(stream: EventStream) -> dict[tuple[int, int], np.ndarray]:
    """Map (x, y) -> event indices at that pixel, in stream order."""
    groups: dict[tuple[int, int], np.ndarray] = {}
    if len(stream) == 0:
        return groups
    pix = stream.pixel_ids()
    order = np.argsort(pix, kind="stable")
    sp = pix[order]
    starts = np.flatnonzero(np.diff(sp)) + 1
    bounds = np.concatenate(([0], starts, [len(sp)]))
    w = stream.geometry.width
    for a, b in zip(bounds[:-1], bounds[1:]):
        pid = int(sp[a])
        groups[(pid % w, pid // w)] = order[a:b]
    return groups


def density_map(stream: EventStream, t0: int, t1: int) -> DensityMap:
    """Per-pixel event counts over [t0, t1), normalized by the global max."""
    if t0 > t1:
        raise ValueError(f"density_map requires t0 <= t1, got {t0} > {t1}")
    g = stream.geometry
    sliced = slice_time(stream, t0, t1)
    counts = np.bincount(sliced.pixel_ids(), minlength=g.num_pixels).reshape(g.height, g.width)
    peak = counts.max() if counts.size else 0
    if peak > 0:
        normalized = counts / float(peak)
    else:
        normalized = np.zeros_like(counts, dtype=np.float64)
    return DensityMap(g, int(t0), int(t1), counts.astype(np.int64), normalized)
