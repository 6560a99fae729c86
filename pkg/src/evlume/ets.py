"""Detection and re-timing of per-pixel trailing event chains.

Low photoreceptor bandwidth stretches one fast brightness change into a
train of progressively later events at the same pixel.  Such trains have
a recognizable signature: constant polarity, non-decreasing inter-event
intervals, and no interval reaching a cutoff.  This module finds maximal
chains with that signature, pixel by pixel, and rewrites each member's
timestamp onto a fixed grid anchored at the chain head — the head is the
least-delayed crossing, so it is the best available estimate of when the
change actually happened.

Scanning is greedy and left-to-right: a chain ends at the first event
violating any condition, and scanning resumes at that event.  Two
implementations exist: a readable per-pixel reference (`detect_trails`)
and a vectorized whole-stream path used by `suppress`; the test suite
holds them equivalent on random streams.

Idempotence note: re-running `suppress` is bit-exact whenever detected
chains are isolated per pixel (separated by a polarity change or a gap
of at least ``max_interval_us``), which covers trailing produced by
step-like scene changes.  If a chain is followed within the cutoff by a
same-polarity event that originally failed only the monotonicity
condition, realignment can shrink the chain's internal intervals enough
for a second pass to absorb that event; greedy scanning makes this
unavoidable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import EventStream

#: Lower bucket edges (µs) for interval histograms; the last bucket is
#: open-ended.  A 1-2-5 ladder spans quantization-scale to second-scale gaps.
HISTOGRAM_EDGES_US: tuple[int, ...] = (
    0, 1, 2, 5, 10, 20, 50, 100, 200, 500,
    1000, 2000, 5000, 10000, 20000, 50000, 100000,
    200000, 500000, 1000000,
)


@dataclass(frozen=True)
class EtsConfig:
    """Tuning for chain detection and realignment.

    max_interval_us:    chain condition — every inter-event interval inside
                        a chain must be strictly below this.
    min_chain_len:      minimum events for a detected chain to be acted on.
    realign_interval_us: spacing of corrected timestamps after the head.
    """

    max_interval_us: int = 1000
    min_chain_len: int = 3
    realign_interval_us: int = 1

    def __post_init__(self):
        if self.realign_interval_us < 1:
            raise ValueError("realign_interval_us must be >= 1")
        if self.max_interval_us < self.realign_interval_us:
            raise ValueError("max_interval_us must be >= realign_interval_us")
        if self.min_chain_len < 2:
            raise ValueError("min_chain_len must be >= 2")


@dataclass(frozen=True)
class TrailChain:
    pixel: tuple[int, int]
    indices: tuple[int, ...]  # positions in the per-pixel sequence
    polarity: int


@dataclass(frozen=True)
class TrailSummary:
    """Counts and interval histograms from one suppression run."""

    chains: int
    realigned_events: int
    bumped_events: int  # corrected timestamps shifted to dodge a collision
    histogram_edges: tuple[int, ...] = HISTOGRAM_EDGES_US
    intervals_before: np.ndarray = field(default=None, repr=False)
    intervals_after: np.ndarray = field(default=None, repr=False)

    def format(self) -> str:
        lines = [
            "# trail suppression summary",
            "# interval histograms count per-pixel consecutive-event gaps;",
            "# bucket i spans [edge_i, edge_{i+1}) microseconds, last bucket open-ended",
            f"chains: {self.chains}",
            f"realigned_events: {self.realigned_events}",
            f"bumped_events: {self.bumped_events}",
            "bucket_low_us\tbefore\tafter",
        ]
        for i, edge in enumerate(self.histogram_edges):
            b = int(self.intervals_before[i]) if self.intervals_before is not None else 0
            a = int(self.intervals_after[i]) if self.intervals_after is not None else 0
            lines.append(f"{edge}\t{b}\t{a}")
        return "\n".join(lines) + "\n"


def detect_trails(t, p, config: EtsConfig | None = None, *, pixel=(0, 0)) -> list[TrailChain]:
    """Find maximal trailing chains in one pixel's event sequence.

    `t` must be strictly increasing (one pixel cannot fire twice at the
    same microsecond).  Returns chains of length >= min_chain_len; events
    outside chains are simply not mentioned.

    Plain-Python reference implementation; `suppress` uses a vectorized
    equivalent for whole streams.
    """
    cfg = config or EtsConfig()
    t = [int(v) for v in t]
    p = [int(v) for v in p]
    if len(t) != len(p):
        raise ValueError("t and p must have equal length")
    if any(b <= a for a, b in zip(t, t[1:])):
        raise ValueError("per-pixel timestamps must be strictly increasing")

    chains: list[TrailChain] = []
    n = len(t)
    i = 0
    while i < n:
        j = i + 1
        prev_dt = None
        while j < n:
            dt = t[j] - t[j - 1]
            if p[j] != p[i] or dt >= cfg.max_interval_us or (prev_dt is not None and dt < prev_dt):
                break
            prev_dt = dt
            j += 1
        if j - i >= cfg.min_chain_len:
            chains.append(TrailChain(tuple(pixel), tuple(range(i, j)), p[i]))
        i = j
    return chains


def _chain_layout(t_s, p_s, pix_s, cfg: EtsConfig):
    """Greedy chain segmentation over events sorted by (pixel, t).

    Returns (heads, chain_id, length): positions of chain heads, each
    event's chain index, and each chain's event count.  Every event
    belongs to exactly one (possibly length-1) segment.

    A segment breaks at event j when the link from j-1 is impossible
    (pixel or polarity change, interval >= cutoff) or when the interval
    shrinks while the previous link is part of the running segment:

        brk[j] = hard[j] or (shrink[j] and not brk[j-1])

    Runs of consecutive shrink-only candidates alternate brk values, so
    the recurrence resolves without a Python-level scan.
    """
    n = t_s.size
    brk = np.ones(n, dtype=bool)
    if n > 1:
        dt = t_s[1:] - t_s[:-1]
        hard = np.ones(n, dtype=bool)
        hard[1:] = (
            (pix_s[1:] != pix_s[:-1])
            | (p_s[1:] != p_s[:-1])
            | (dt >= cfg.max_interval_us)
        )
        shrink = np.zeros(n, dtype=bool)
        # dt[j-1] may span a pixel boundary, but then hard[j-1] already
        # guarantees brk[j-1], which masks the garbage comparison.
        shrink[2:] = dt[1:] < dt[:-1]

        brk = hard.copy()
        pending = shrink & ~hard
        if pending.any():
            idx = np.flatnonzero(pending)
            new_run = np.ones(idx.size, dtype=bool)
            new_run[1:] = np.diff(idx) > 1
            run_id = np.cumsum(new_run) - 1
            run_start = idx[new_run]
            offset = idx - run_start[run_id]
            before_run = brk[run_start[run_id] - 1]  # run starts at idx >= 2
            brk[idx] = before_run ^ (offset % 2 == 0)

    heads = np.flatnonzero(brk)
    chain_id = np.cumsum(brk) - 1
    length = np.diff(np.append(heads, n))
    return heads, chain_id, length


def _resolve_collisions(new_t, pix_s, corrected) -> int:
    """Bump corrected timestamps forward past same-pixel duplicates.

    Mutates `new_t`.  Only reachable with realign_interval_us > 1: a
    widened grid can push a corrected timestamp onto (or past) a later
    untouched event.  Untouched events never move; corrected ones shift
    +1 µs until free, processed in per-pixel time order.
    """
    order = np.lexsort((new_t, pix_s))
    dup = (pix_s[order][1:] == pix_s[order][:-1]) & (new_t[order][1:] == new_t[order][:-1])
    if not dup.any():
        return 0
    bumped = 0
    for pid in np.unique(pix_s[order][1:][dup]):
        sel = np.flatnonzero(pix_s == pid)
        taken = {int(v) for v in new_t[sel][~corrected[sel]]}
        for i in sel:
            if not corrected[i]:
                continue
            v = int(new_t[i])
            if v in taken:
                while v in taken:
                    v += 1
                new_t[i] = v
                bumped += 1
            taken.add(v)
    return bumped


def _suppress_core(stream: EventStream, cfg: EtsConfig):
    n = len(stream)
    if n == 0:
        return stream, 0, 0, 0

    pix = stream.pixel_ids()
    order = np.lexsort((stream.t, pix))
    t_s = stream.t[order].astype(np.int64)
    p_s = stream.p[order]
    pix_s = pix[order]

    heads, chain_id, length = _chain_layout(t_s, p_s, pix_s, cfg)
    qualifies = length >= cfg.min_chain_len
    member = qualifies[chain_id]
    position = np.arange(n, dtype=np.int64) - heads[chain_id]
    head_t = t_s[heads][chain_id]
    new_t = np.where(member, head_t + position * cfg.realign_interval_us, t_s)

    bumped = 0
    if cfg.realign_interval_us > 1:
        # With the default 1 µs grid, corrected times never exceed the
        # originals (integer timestamps rise by >= 1 per event), so they
        # cannot reach any later event; the duplicate scan is skipped.
        bumped = _resolve_collisions(new_t, pix_s, member)

    x_s = stream.x[order]
    y_s = stream.y[order]
    out = np.lexsort((x_s, y_s, new_t))
    result = EventStream(
        stream.geometry,
        new_t[out].astype(np.uint64),
        x_s[out],
        y_s[out],
        p_s[out],
    )
    return result, int(qualifies.sum()), int(member.sum()), bumped


def _interval_histogram(stream: EventStream) -> np.ndarray:
    """Per-pixel consecutive-interval counts over HISTOGRAM_EDGES_US buckets."""
    if len(stream) < 2:
        return np.zeros(len(HISTOGRAM_EDGES_US), dtype=np.int64)
    pix = stream.pixel_ids()
    order = np.lexsort((stream.t, pix))
    t_s = stream.t[order].astype(np.int64)
    same = pix[order][1:] == pix[order][:-1]
    gaps = (t_s[1:] - t_s[:-1])[same]
    edges = np.append(np.asarray(HISTOGRAM_EDGES_US, dtype=np.float64), np.inf)
    counts, _ = np.histogram(gaps, bins=edges)
    return counts.astype(np.int64)


def suppress(stream: EventStream, config: EtsConfig | None = None) -> EventStream:
    """Re-time every detected trailing chain onto the realignment grid.

    The head of each chain keeps its timestamp; member j is rewritten to
    head + j*realign_interval_us.  Event count and every (x, y, p) triple
    are preserved exactly; output is in canonical stream order.
    """
    out, _, _, _ = _suppress_core(stream, config or EtsConfig())
    return out


def suppress_with_summary(stream: EventStream, config: EtsConfig | None = None):
    """Like `suppress`, also returning a TrailSummary with histograms."""
    cfg = config or EtsConfig()
    out, chains, realigned, bumped = _suppress_core(stream, cfg)
    summary = TrailSummary(
        chains=chains,
        realigned_events=realigned,
        bumped_events=bumped,
        intervals_before=_interval_histogram(stream),
        intervals_after=_interval_histogram(out),
    )
    return out, summary


def trail_statistics(stream: EventStream, config: EtsConfig | None = None) -> TrailSummary:
    """Chain counts and before/after interval histograms, without the stream."""
    _, summary = suppress_with_summary(stream, config)
    return summary
