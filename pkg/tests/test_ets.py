import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evlume import EventStream, SensorGeometry, group_by_pixel, validate
from evlume.ets import (
    EtsConfig,
    TrailChain,
    detect_trails,
    suppress,
    suppress_with_summary,
    trail_statistics,
)

GEOM = SensorGeometry(16, 16)
DEFAULT = EtsConfig()


def chain_indices(chains):
    return [c.indices for c in chains]


class TestConfig:
    def test_defaults(self):
        assert DEFAULT.max_interval_us == 1000
        assert DEFAULT.min_chain_len == 3
        assert DEFAULT.realign_interval_us == 1

    @pytest.mark.parametrize(
        "kw",
        [
            {"realign_interval_us": 0},
            {"max_interval_us": 2, "realign_interval_us": 5},
            {"min_chain_len": 1},
        ],
    )
    def test_rejects_bad_config(self, kw):
        with pytest.raises(ValueError):
            EtsConfig(**kw)


class TestDetectTrails:
    def test_full_chain(self):
        # intervals 100, 200, 400: non-decreasing, all < 1000
        chains = detect_trails([0, 100, 300, 700], [1, 1, 1, 1])
        assert chain_indices(chains) == [(0, 1, 2, 3)]
        assert chains[0].polarity == 1

    def test_polarity_break(self):
        # longest same-polarity run is 2, below min_chain_len = 3
        chains = detect_trails([0, 100, 300, 700], [1, 1, -1, 1])
        assert chains == []

    def test_interval_shrink_breaks(self):
        # intervals 400 then 100: the shrink ends the candidate at length 2
        assert detect_trails([0, 400, 500], [1, 1, 1]) == []
        relaxed = EtsConfig(min_chain_len=2)
        chains = detect_trails([0, 400, 500], [1, 1, 1], relaxed)
        assert chain_indices(chains) == [(0, 1)]

    def test_interval_cutoff(self):
        chains = detect_trails([0, 100, 1100, 1300], [1, 1, 1, 1])
        assert chains == []  # 1000 µs gap >= max_interval_us

        cfg = EtsConfig(max_interval_us=5000)
        chains = detect_trails([0, 100, 1100, 1300], [1, 1, 1, 1], cfg)
        # 100, 1000, 200: shrink at the last link ends the chain at 3 events
        assert chain_indices(chains) == [(0, 1, 2)]

    def test_equal_intervals_allowed(self):
        chains = detect_trails([0, 10, 20, 30], [-1, -1, -1, -1])
        assert chain_indices(chains) == [(0, 1, 2, 3)]

    def test_scan_resumes_at_violator(self):
        # shrink at index 3 ends chain [0,1,2]; a fresh chain grows from 3
        chains = detect_trails([0, 100, 300, 400, 600, 1000], [1] * 6)
        assert chain_indices(chains) == [(0, 1, 2), (3, 4, 5)]

    def test_rejects_non_increasing(self):
        with pytest.raises(ValueError):
            detect_trails([0, 5, 5], [1, 1, 1])

    def test_pixel_is_recorded(self):
        chains = detect_trails([0, 1, 2], [1, 1, 1], pixel=(7, 3))
        assert chains[0].pixel == (7, 3)


def stream_of(rows, geom=GEOM):
    return EventStream.from_events(geom, rows).canonical()


class TestSuppress:
    def test_single_chain_realigned(self):
        s = stream_of([(0, 4, 4, 1), (100, 4, 4, 1), (300, 4, 4, 1), (700, 4, 4, 1)])
        out = suppress(s)
        assert [e.t for e in out] == [0, 1, 2, 3]
        assert all(e.x == 4 and e.y == 4 and e.p == 1 for e in out)

    def test_no_chains_is_identity(self):
        s = stream_of([(0, 1, 1, 1), (5000, 1, 1, 1), (9000, 1, 1, -1)])
        assert suppress(s) == s

    def test_head_anchors_chain(self):
        s = stream_of([(1234, 2, 2, -1), (1300, 2, 2, -1), (1500, 2, 2, -1)])
        out = suppress(s)
        assert [e.t for e in out] == [1234, 1235, 1236]

    def test_non_chain_events_untouched(self):
        rows = [(0, 4, 4, 1), (100, 4, 4, 1), (300, 4, 4, 1), (42, 9, 9, -1)]
        out = suppress(stream_of(rows))
        bystander = [e for e in out if e.x == 9]
        assert bystander == [(42, 9, 9, -1)]

    def test_custom_realign_interval(self):
        cfg = EtsConfig(realign_interval_us=10)
        s = stream_of([(50, 0, 0, 1), (60, 0, 0, 1), (80, 0, 0, 1)])
        assert [e.t for e in suppress(s, cfg)] == [50, 60, 70]

    def test_collision_bumps_corrected_timestamp(self):
        # widened grid lands a corrected event on the untouched opposite-
        # polarity event at t=5; the corrected one shifts forward
        cfg = EtsConfig(realign_interval_us=5)
        rows = [(0, 0, 0, 1), (1, 0, 0, 1), (2, 0, 0, 1), (5, 0, 0, -1)]
        out, summary = suppress_with_summary(stream_of(rows), cfg)
        assert [(e.t, e.p) for e in out] == [(0, 1), (5, -1), (6, 1), (10, 1)]
        assert summary.bumped_events == 1
        assert validate(out) is None

    def test_greedy_redetection_can_absorb_follower(self):
        # documents the isolation precondition for idempotence: the event
        # at 400 broke the original chain only on monotonicity, and the
        # realigned chain's 1 µs intervals let a second pass absorb it
        s = stream_of([(0, 0, 0, 1), (100, 0, 0, 1), (300, 0, 0, 1), (400, 0, 0, 1)])
        once = suppress(s)
        assert [e.t for e in once] == [0, 1, 2, 400]
        twice = suppress(once)
        assert [e.t for e in twice] == [0, 1, 2, 3]


class TestTrailStatistics:
    def test_trail_free(self):
        s = stream_of([(0, 1, 1, 1), (9000, 1, 1, 1)])
        summary = trail_statistics(s)
        assert summary.chains == 0
        assert summary.realigned_events == 0

    def test_single_chain_counts_all_members(self):
        s = stream_of([(0, 4, 4, 1), (100, 4, 4, 1), (300, 4, 4, 1), (700, 4, 4, 1)])
        summary = trail_statistics(s)
        assert summary.chains == 1
        assert summary.realigned_events == 4

    def test_chains_at_distinct_pixels(self):
        rows = []
        for k, (x, y) in enumerate([(1, 1), (2, 3), (5, 5)]):
            base = 10_000 * k
            rows += [(base, x, y, 1), (base + 10, x, y, 1), (base + 30, x, y, 1)]
        summary = trail_statistics(stream_of(rows))
        assert summary.chains == 3
        assert summary.realigned_events == 9

    def test_histograms_move_mass_to_realign_bucket(self):
        s = stream_of([(0, 4, 4, 1), (100, 4, 4, 1), (300, 4, 4, 1), (700, 4, 4, 1)])
        summary = trail_statistics(s)
        # before: gaps 100, 200, 400 -> buckets [100,200), [200,500) x2
        edges = summary.histogram_edges
        assert summary.intervals_before[edges.index(100)] == 1
        assert summary.intervals_before[edges.index(200)] == 2
        # after: gaps 1, 1, 1
        assert summary.intervals_after[edges.index(1)] == 3
        assert summary.intervals_after.sum() == 3

    def test_format_mentions_buckets(self):
        s = stream_of([(0, 1, 1, 1)])
        text = trail_statistics(s).format()
        assert "microseconds" in text
        assert "chains: 0" in text


# --- reference implementation cross-check -------------------------------

def reference_suppress(stream, cfg):
    """Per-pixel loop over detect_trails; realign grid of 1 µs only."""
    assert cfg.realign_interval_us == 1
    new_t = stream.t.astype(np.int64).copy()
    for (x, y), idxs in group_by_pixel(stream).items():
        tt = [int(v) for v in stream.t[idxs]]
        pp = [int(v) for v in stream.p[idxs]]
        for chain in detect_trails(tt, pp, cfg, pixel=(x, y)):
            head = tt[chain.indices[0]]
            for k, ci in enumerate(chain.indices):
                new_t[idxs[ci]] = head + k * cfg.realign_interval_us
    order = np.lexsort((stream.x, stream.y, new_t))
    return EventStream(
        stream.geometry,
        new_t[order].astype(np.uint64),
        stream.x[order],
        stream.y[order],
        stream.p[order],
    )


@st.composite
def dense_streams(draw):
    """Valid streams with clustered per-pixel times so chains actually form."""
    g = SensorGeometry(draw(st.integers(1, 4)), draw(st.integers(1, 4)))
    rows = []
    for y in range(g.height):
        for x in range(g.width):
            n = draw(st.integers(0, 12))
            if n == 0:
                continue
            gaps = draw(
                st.lists(st.integers(1, 60), min_size=n - 1, max_size=n - 1)
            ) if n > 1 else []
            t = draw(st.integers(0, 500))
            times = [t]
            for gap in gaps:
                times.append(times[-1] + gap)
            for tv in times:
                rows.append((tv, x, y, draw(st.sampled_from([1, -1]))))
    rows.sort(key=lambda r: (r[0], r[2], r[1]))
    return EventStream.from_events(g, rows)


@settings(max_examples=200, deadline=None)
@given(dense_streams(), st.integers(2, 5), st.integers(30, 200))
def test_suppress_matches_reference(s, min_len, max_int):
    cfg = EtsConfig(max_interval_us=max_int, min_chain_len=min_len)
    assert suppress(s, cfg) == reference_suppress(s, cfg)


@settings(max_examples=150, deadline=None)
@given(dense_streams())
def test_suppress_preserves_payload(s):
    out = suppress(s)
    assert len(out) == len(s)
    key = lambda stream: sorted(zip(stream.x, stream.y, stream.p))
    assert key(out) == key(s)
    assert validate(out) is None


@settings(max_examples=150, deadline=None)
@given(dense_streams())
def test_suppress_preserves_per_pixel_order(s):
    # with the 1 µs default grid, corrected times never pass later events
    out = suppress(s)
    gi, go = group_by_pixel(s), group_by_pixel(out)
    assert set(gi) == set(go)
    for px, idxs in gi.items():
        assert list(s.p[idxs]) == list(out.p[go[px]])


@st.composite
def isolated_burst_streams(draw):
    """Streams whose chains are isolated: per-pixel bursts of non-decreasing
    intervals, separated by gaps >= max_interval_us.  In this regime
    suppression is a projection (see module docstring)."""
    g = SensorGeometry(draw(st.integers(1, 3)), draw(st.integers(1, 3)))
    rows = []
    for y in range(g.height):
        for x in range(g.width):
            t = draw(st.integers(0, 100))
            for _ in range(draw(st.integers(0, 3))):
                n = draw(st.integers(1, 6))
                gaps = sorted(draw(st.lists(st.integers(1, 900), min_size=n - 1, max_size=n - 1)))
                pol = draw(st.sampled_from([1, -1]))
                rows.append((t, x, y, pol))
                for gap in gaps:
                    t += gap
                    rows.append((t, x, y, pol))
                t += 1000 + draw(st.integers(0, 500))
    rows.sort(key=lambda r: (r[0], r[2], r[1]))
    return EventStream.from_events(g, rows)


@settings(max_examples=150, deadline=None)
@given(isolated_burst_streams())
def test_suppress_idempotent_on_isolated_chains(s):
    once = suppress(s)
    assert suppress(once) == once


@settings(max_examples=150, deadline=None)
@given(dense_streams(), st.integers(2, 4), st.integers(20, 150))
def test_detected_chains_satisfy_all_conditions(s, min_len, max_int):
    cfg = EtsConfig(max_interval_us=max_int, min_chain_len=min_len)
    for (x, y), idxs in group_by_pixel(s).items():
        tt = [int(v) for v in s.t[idxs]]
        pp = [int(v) for v in s.p[idxs]]
        for chain in detect_trails(tt, pp, cfg, pixel=(x, y)):
            assert len(chain.indices) >= cfg.min_chain_len
            ts = [tt[i] for i in chain.indices]
            ps = [pp[i] for i in chain.indices]
            assert len(set(ps)) == 1
            gaps = [b - a for a, b in zip(ts, ts[1:])]
            assert all(g2 >= g1 for g1, g2 in zip(gaps, gaps[1:]))
            assert max(gaps) < cfg.max_interval_us
            # consecutive in the per-pixel sequence
            assert list(chain.indices) == list(range(chain.indices[0], chain.indices[-1] + 1))
