import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazeseg.errors import DataError
from gazeseg.metrics import (
    FrameScore,
    aggregate,
    dsc,
    from_frame_scores,
    jaccard,
    mean_over_runs,
    relative_improvement,
    round1,
    score_frame,
)
from gazeseg.rasters import Mask


def mask_flat(n, total=400, shape=(20, 20)):
    bits = np.zeros(shape, dtype=bool)
    bits.flat[:n] = True
    return Mask(bits)


def mask_range(lo, hi, shape=(20, 20)):
    bits = np.zeros(shape, dtype=bool)
    bits.flat[lo:hi] = True
    return Mask(bits)


class TestJaccardDsc:
    def test_identical_masks(self):
        m = mask_flat(50)
        assert jaccard(m, m) == 1.0
        assert dsc(m, m) == 1.0

    def test_disjoint(self):
        a, b = mask_range(0, 50), mask_range(50, 100)
        assert jaccard(a, b) == 0.0
        assert dsc(a, b) == 0.0

    def test_half_overlap(self):
        a, b = mask_range(0, 100), mask_range(50, 150)
        assert jaccard(a, b) == 50 / 150
        assert dsc(a, b) == 100 / 200

    def test_empty_gt_raises(self):
        with pytest.raises(DataError):
            jaccard(mask_flat(10), mask_flat(0))
        with pytest.raises(DataError):
            dsc(mask_flat(10), mask_flat(0))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_identities(self, seed):
        """J and DSC relate by d = 2j/(1+j); both live in [0, 1]."""
        rng = np.random.default_rng(seed)
        a = Mask(rng.random((15, 15)) < 0.5)
        b = Mask(rng.random((15, 15)) < 0.5)
        if b.size() == 0:
            return
        j, d = jaccard(a, b), dsc(a, b)
        assert 0.0 <= j <= 1.0
        assert 0.0 <= d <= 1.0
        assert abs(d - 2 * j / (1 + j)) <= 1e-12
        assert j <= d


class TestScoring:
    def test_score_frame(self):
        s = score_frame(mask_range(0, 100), mask_range(50, 150), 7)
        assert s.frame_index == 7
        assert s.valid
        assert s.j == 50 / 150

    def test_empty_gt_marks_skipped(self):
        s = score_frame(mask_flat(10), mask_flat(0), 3)
        assert not s.valid
        assert s.j == 0.0

    def test_aggregate_excludes_skipped(self):
        scores = [
            FrameScore(0, j=1.0, dsc=1.0),
            FrameScore(1, j=0.5, dsc=0.5),
            FrameScore(2, valid=False),
        ]
        mean_j, mean_dsc = aggregate(scores)
        assert mean_j == 75.0
        assert mean_dsc == 75.0

    def test_aggregate_nothing_scorable(self):
        with pytest.raises(DataError):
            aggregate([FrameScore(0, valid=False)])

    def test_from_frame_scores(self):
        r = from_frame_scores("p1", "0", "rats", (True, False, True), [FrameScore(0, j=0.4, dsc=0.6)])
        assert r.flags == (True, False, True)
        assert r.mean_j == 40.0
        assert r.frames_scored == 1


class TestAggregationArithmetic:
    def test_published_improvement_figures(self):
        assert relative_improvement(38.8, 66.2) == 70.6
        assert relative_improvement(27.4, 43.6) == 59.1

    def test_improvement_needs_positive_baseline(self):
        with pytest.raises(DataError):
            relative_improvement(0.0, 10.0)

    def test_round1_half_up(self):
        assert round1(70.65) == 70.7
        assert round1(70.64) == 70.6
        assert round1(2.25) == 2.3

    def test_mean_over_runs(self):
        a = from_frame_scores("p1", "0", "rats", (1, 0, 0), [FrameScore(0, j=0.2, dsc=0.2)])
        b = from_frame_scores("p1", "1", "rats", (1, 0, 0), [FrameScore(0, j=0.4, dsc=0.6)])
        m = mean_over_runs([a, b])
        assert m.run == "mean"
        assert m.mean_j == 30.0
        assert m.mean_dsc == 40.0
        assert m.frames_scored == 2

    def test_mean_over_runs_rejects_mixed_flags(self):
        a = from_frame_scores("p1", "0", "rats", (1, 0, 0), [FrameScore(0, j=0.2, dsc=0.2)])
        b = from_frame_scores("p1", "1", "rats", (0, 1, 0), [FrameScore(0, j=0.4, dsc=0.6)])
        with pytest.raises(DataError):
            mean_over_runs([a, b])
