import numpy as np
import pytest

from gazeseg.errors import ConfigError, ProviderError
from gazeseg.gate import SizeGate
from gazeseg.les import DEFAULT_N_CANDIDATES, RADIUS_MICE, RADIUS_RATS, LesParams, les_refine
from gazeseg.rasters import Mask


def mask_of_size(n, shape=(100, 100)):
    bits = np.zeros(shape, dtype=bool)
    bits.flat[:n] = True
    return Mask(bits)


GATE = SizeGate(expected_size=100.0, alpha=0.5)
GOOD = mask_of_size(100)
BAD = mask_of_size(5)


class CountingSegmenter:
    """Returns a gate-valid mask only inside a disk around a target point."""

    def __init__(self, target=None, accept_radius=0.0):
        self.target = target
        self.accept_radius = accept_radius
        self.calls = []

    def __call__(self, p):
        self.calls.append(p)
        if self.target is None:
            return BAD
        d = np.hypot(p[0] - self.target[0], p[1] - self.target[1])
        return GOOD if d <= self.accept_radius else BAD


def test_defaults_match_published_settings():
    assert DEFAULT_N_CANDIDATES == 20
    assert RADIUS_RATS == 50.0
    assert RADIUS_MICE == 25.0
    assert LesParams().n_candidates == 20
    assert LesParams().radius == 50.0


def test_valid_initial_short_circuits():
    seg = CountingSegmenter()
    out = les_refine((10.0, 10.0), GOOD, GATE, seg, LesParams(), np.random.default_rng(0))
    assert out.accepted
    assert out.probes_used == 0
    assert seg.calls == []
    assert out.prompt == (10.0, 10.0)
    assert out.mask is GOOD


def test_all_probes_fail_keeps_original():
    seg = CountingSegmenter()
    out = les_refine((50.0, 50.0), BAD, GATE, seg, LesParams(), np.random.default_rng(1))
    assert not out.accepted
    assert out.probes_used == 20
    assert len(seg.calls) == 20
    assert out.prompt == (50.0, 50.0)
    assert out.mask is BAD


def test_first_accept_stops_probing():
    # a huge accept region means the very first probe lands inside it
    seg = CountingSegmenter(target=(50.0, 50.0), accept_radius=1000.0)
    out = les_refine((50.0, 50.0), BAD, GATE, seg, LesParams(), np.random.default_rng(2))
    assert out.accepted
    assert out.probes_used == 1
    assert len(seg.calls) == 1
    assert out.prompt == seg.calls[0]


def test_candidates_stay_within_radius_of_prompt():
    seg = CountingSegmenter()
    prompt = (50.0, 50.0)
    params = LesParams(radius=7.0)
    les_refine(prompt, BAD, GATE, seg, params, np.random.default_rng(3))
    for cx, cy in seg.calls:
        assert abs(cx - prompt[0]) <= 7.0
        assert abs(cy - prompt[1]) <= 7.0


def test_clamping_to_bounds():
    seg = CountingSegmenter()
    les_refine((0.0, 0.0), BAD, GATE, seg, LesParams(radius=50.0), np.random.default_rng(4))
    for cx, cy in seg.calls:
        assert 0.0 <= cx <= 99.0
        assert 0.0 <= cy <= 99.0
    # with a corner prompt and r=50, some raw draws must have been negative
    assert any(cx == 0.0 or cy == 0.0 for cx, cy in seg.calls)


def test_determinism_same_rng_seed():
    a, b = CountingSegmenter(), CountingSegmenter()
    les_refine((50.0, 50.0), BAD, GATE, a, LesParams(), np.random.default_rng(99))
    les_refine((50.0, 50.0), BAD, GATE, b, LesParams(), np.random.default_rng(99))
    assert a.calls == b.calls


def test_acceptance_rate_matches_bernoulli_model():
    """With per-probe success probability q, acceptance over N probes
    should track the closed form 1 - (1-q)^N."""
    n = 20
    for q in (0.1, 0.3, 0.5):
        hits = 0
        trials = 2000
        for seed in range(trials):
            coin = np.random.default_rng((seed, 12345))

            def seg(p):
                return GOOD if coin.uniform() < q else BAD

            out = les_refine(
                (50.0, 50.0), BAD, GATE, seg, LesParams(), np.random.default_rng(seed)
            )
            hits += out.accepted
        expected = 1.0 - (1.0 - q) ** n
        assert abs(hits / trials - expected) < 0.05


def test_provider_error_propagates():
    def boom(p):
        raise ProviderError("segmenter crashed")

    with pytest.raises(ProviderError, match="probe 1"):
        les_refine((50.0, 50.0), BAD, GATE, boom, LesParams(), np.random.default_rng(0))


def test_param_validation():
    with pytest.raises(ConfigError):
        LesParams(n_candidates=0)
    with pytest.raises(ConfigError):
        LesParams(radius=0.0)
