import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from tsdiar import intervals
from tsdiar.timeline import (
    ActivityMatrix,
    Diarization,
    FrameGrid,
    Turn,
    overlap_regions,
    rasterize,
    segmentize,
    speaking_durations,
)

import oracles


def make_diar(spans, recording_id="rec"):
    return Diarization(
        recording_id,
        tuple(Turn(recording_id, spk, on, off - on) for spk, on, off in spans),
    )


class TestIntervals:
    def test_merge_overlapping_and_abutting(self):
        assert intervals.merge([(0, 1), (1, 2), (5, 6), (5.5, 7)]) == [(0, 2), (5, 7)]

    def test_subtract(self):
        assert intervals.subtract([(0, 10)], [(2, 3), (5, 6)]) == [(0, 2), (3, 5), (6, 10)]
        assert intervals.subtract([(0, 10)], [(0, 12)]) == []

    def test_intersect(self):
        assert intervals.intersect([(0, 5), (8, 10)], [(4, 9)]) == [(4, 5), (8, 9)]

    def test_total(self):
        assert intervals.total([(0, 1), (0.5, 2)]) == pytest.approx(2.0)


class TestTurn:
    def test_offset(self):
        t = Turn("rec", "A", 1.5, 2.0)
        assert t.offset == 3.5

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"onset": -0.1, "duration": 1.0},
            {"onset": 0.0, "duration": 0.0},
            {"onset": 0.0, "duration": -1.0},
            {"onset": float("nan"), "duration": 1.0},
            {"onset": 0.0, "duration": float("inf")},
        ],
    )
    def test_rejects_bad_times(self, kwargs):
        with pytest.raises(ValueError):
            Turn("rec", "A", **kwargs)

    def test_rejects_whitespace_labels(self):
        with pytest.raises(ValueError):
            Turn("rec", "spk A", 0.0, 1.0)
        with pytest.raises(ValueError):
            Turn("my rec", "A", 0.0, 1.0)


class TestDiarization:
    def test_merges_same_speaker_overlap_and_abutment(self):
        d = make_diar([("A", 0, 1), ("A", 1, 2), ("A", 1.5, 3), ("A", 4, 5)])
        assert [(t.onset, t.offset) for t in d.turns] == [(0, 3), (4, 5)]

    def test_canonical_order(self):
        d = make_diar([("B", 1, 2), ("A", 1, 3), ("A", 0, 0.5)])
        assert [(t.onset, t.speaker) for t in d.turns] == [(0, "A"), (1, "A"), (1, "B")]

    def test_rejects_foreign_recording(self):
        with pytest.raises(ValueError):
            Diarization("rec1", (Turn("rec2", "A", 0, 1),))

    def test_speakers_and_extent(self):
        d = make_diar([("B", 1, 2), ("A", 0, 5)])
        assert d.speakers == ("A", "B")
        assert d.extent == 5.0
        assert Diarization("rec").extent == 0.0


class TestRasterize:
    def test_full_coverage_single_turn(self):
        d = make_diar([("A", 0.0, 1.0)])
        grid = FrameGrid(frame_step=0.01, total_frames=100)
        act = rasterize(d, grid)
        assert_array_equal(act.values[:, 0], np.ones(100))

    def test_empty_diarization(self):
        grid = FrameGrid(frame_step=0.01, total_frames=50)
        act = rasterize(Diarization("rec"), grid)
        assert act.values.shape == (50, 0)
        act2 = rasterize(Diarization("rec"), grid, speakers=("A", "B"))
        assert_array_equal(act2.values, np.zeros((50, 2)))

    def test_partial_overlap_midpoint_rule(self):
        # A: [0,2), B: [1,3), step 0.5 -> midpoints 0.25..2.75
        # hand enumeration: A covers frames 0-3, B covers frames 2-5
        d = make_diar([("A", 0, 2), ("B", 1, 3)])
        act = rasterize(d, FrameGrid(frame_step=0.5, total_frames=6))
        assert_array_equal(act.values[:, 0], [1, 1, 1, 1, 0, 0])
        assert_array_equal(act.values[:, 1], [0, 0, 1, 1, 1, 1])
        both = (act.values.sum(axis=1) == 2).nonzero()[0]
        assert_array_equal(both, [2, 3])

    def test_matches_direct_enumeration(self, rng):
        d = oracles.random_diarization(rng, max_time=20.0)
        grid = FrameGrid.covering(d.extent, 0.001)
        fast = rasterize(d, grid)
        slow, labels = oracles.frame_activity(d, grid.total_frames)
        assert tuple(labels) == fast.speakers
        assert_array_equal(fast.values.astype(bool), slow)

    def test_permutation_equivariant(self, rng):
        d = oracles.random_diarization(rng, max_speakers=3)
        grid = FrameGrid.covering(d.extent, 0.01)
        forward = rasterize(d, grid, speakers=d.speakers)
        backward = rasterize(d, grid, speakers=d.speakers[::-1])
        assert_array_equal(forward.values, backward.values[:, ::-1])


class TestSegmentize:
    def test_inverse_of_rasterize(self):
        grid = FrameGrid(frame_step=0.01, total_frames=100)
        col = np.ones((100, 1))
        act = ActivityMatrix(grid=grid, speakers=("A",), values=col)
        d = segmentize(act)
        assert len(d.turns) == 1
        assert (d.turns[0].onset, d.turns[0].offset) == (0.0, pytest.approx(1.0))

    def test_short_run_dropped(self):
        grid = FrameGrid(frame_step=0.01, total_frames=50)
        col = np.zeros((50, 1))
        col[20] = 1.0
        act = ActivityMatrix(grid=grid, speakers=("A",), values=col)
        assert segmentize(act, min_duration=0.2).turns == ()
        assert len(segmentize(act, min_duration=0.0).turns) == 1

    def test_alternating_pattern(self):
        # 1,1,0,1,1 at step 0.1 -> two turns of 0.2 s
        grid = FrameGrid(frame_step=0.1, total_frames=5)
        act = ActivityMatrix(grid=grid, speakers=("A",), values=np.array([[1, 1, 0, 1, 1]]).T)
        d = segmentize(act)
        spans = [(t.onset, round(t.duration, 9)) for t in d.turns]
        assert spans == [(0.0, 0.2), (pytest.approx(0.3), 0.2)]

    def test_rejects_non_binary(self):
        grid = FrameGrid(frame_step=0.1, total_frames=2)
        act = ActivityMatrix(grid=grid, speakers=("A",), values=np.array([[0.5], [1.0]]))
        with pytest.raises(ValueError, match="binarized"):
            segmentize(act)

    @settings(max_examples=40, deadline=None)
    @given(data=st.data())
    def test_round_trip_property(self, data):
        n = data.draw(st.integers(1, 60))
        cols = data.draw(st.integers(1, 3))
        bits = data.draw(
            st.lists(st.lists(st.booleans(), min_size=n, max_size=n), min_size=cols, max_size=cols)
        )
        values = np.array(bits, dtype=float).T
        grid = FrameGrid(frame_step=0.01, total_frames=n)
        act = ActivityMatrix(grid=grid, speakers=tuple(f"s{i}" for i in range(cols)), values=values)
        back = rasterize(segmentize(act), grid, speakers=act.speakers)
        assert_array_equal(back.values, act.values)


class TestOverlapRegions:
    def test_two_interval_case(self):
        d = make_diar([("A", 0, 2), ("B", 1, 3)])
        assert overlap_regions(d) == [
            (0.0, 1.0, frozenset({"A"})),
            (1.0, 2.0, frozenset({"A", "B"})),
            (2.0, 3.0, frozenset({"B"})),
        ]

    def test_single_speaker(self):
        d = make_diar([("A", 0, 5)])
        assert overlap_regions(d) == [(0.0, 5.0, frozenset({"A"}))]

    def test_nested_three_speakers_vs_brute_force(self):
        d = make_diar([("A", 0, 10), ("B", 2, 8), ("C", 4, 6)])
        regions = overlap_regions(d)
        support = sum(off - on for on, off, _ in regions)
        act, _ = oracles.frame_activity(d, 10_000)
        assert support == pytest.approx(0.001 * (act.any(axis=1).sum()), abs=1e-9)
        # the region decomposition itself
        assert [(on, off, set(p)) for on, off, p in regions] == [
            (0, 2, {"A"}),
            (2, 4, {"A", "B"}),
            (4, 6, {"A", "B", "C"}),
            (6, 8, {"A", "B"}),
            (8, 10, {"A"}),
        ]

    def test_partition_covers_support(self, rng):
        for _ in range(5):
            d = oracles.random_diarization(rng)
            regions = overlap_regions(d)
            measured = sum(off - on for on, off, _ in regions)
            assert measured == pytest.approx(intervals.total(d.speech_support()), rel=1e-12)


class TestSpeakingDurations:
    def test_two_speaker_overlap(self):
        d = make_diar([("A", 0, 2), ("B", 1, 3)])
        assert speaking_durations(d, "non_overlapping") == {"A": 1.0, "B": 1.0}
        assert speaking_durations(d, "total") == {"A": 2.0, "B": 2.0}

    def test_disjoint_equals_total(self):
        d = make_diar([("A", 0, 2), ("B", 3, 5)])
        assert speaking_durations(d, "total") == speaking_durations(d, "non_overlapping")

    def test_matches_millisecond_brute_force(self, rng):
        d = oracles.random_diarization(rng, max_speakers=4, max_turns=15)
        n = int(np.ceil(d.extent / 0.001))
        act, labels = oracles.frame_activity(d, n)
        solo = act.sum(axis=1) == 1
        want_solo = {
            s: 0.001 * float((act[:, j] & solo).sum()) for j, s in enumerate(labels)
        }
        want_total = {s: 0.001 * float(act[:, j].sum()) for j, s in enumerate(labels)}
        got_solo = speaking_durations(d, "non_overlapping")
        got_total = speaking_durations(d, "total")
        for s in labels:
            assert got_solo[s] == pytest.approx(want_solo[s], abs=0.0011)
            assert got_total[s] == pytest.approx(want_total[s], abs=0.0011)
        assert all(got_solo[s] <= got_total[s] + 1e-12 for s in labels)

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            speaking_durations(Diarization("rec"), "bogus")


class TestFrameGrid:
    def test_covering(self):
        g = FrameGrid.covering(600.0, 0.01)
        assert g.total_frames == 60_000
        assert FrameGrid.covering(0.0).total_frames == 0

    def test_midpoints(self):
        g = FrameGrid(frame_step=0.5, total_frames=3, origin=1.0)
        assert_array_equal(g.midpoints(), [1.25, 1.75, 2.25])

    def test_activity_matrix_validation(self):
        g = FrameGrid(frame_step=0.5, total_frames=2)
        with pytest.raises(ValueError, match="duplicate"):
            ActivityMatrix(grid=g, speakers=("A", "A"), values=np.zeros((2, 2)))
        with pytest.raises(ValueError, match="shape"):
            ActivityMatrix(grid=g, speakers=("A",), values=np.zeros((3, 1)))
        with pytest.raises(ValueError, match="0, 1"):
            ActivityMatrix(grid=g, speakers=("A",), values=np.array([[1.5], [0.0]]))
