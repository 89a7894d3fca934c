"""End-to-end acceptance suite.

One test per criterion; each prints a single PASS line on success
(run with -s or look at captured output). Tolerances are pinned in the
assertions, not configurable.
"""

import time
from dataclasses import replace

import numpy as np
import pytest
from click.testing import CliRunner

from gazeseg.cli import main as cli_main
from gazeseg.dar import PROFILE_MICE, PROFILE_RATS, DarParams, dar_refine, extract_maxima
from gazeseg.gate import SizeGate, calibrate_gate
from gazeseg.geometry import Quad, apply_homography, arena_homography, detect_arena_quad, estimate_homography
from gazeseg.kalman import KalmanConfig, kf_correct, kf_init, kf_predict
from gazeseg.les import LesParams, les_refine
from gazeseg.metrics import dsc, jaccard, relative_improvement
from gazeseg.pipeline import PipelineConfig, SimulatedDataset, isolation_grid, run_experiment
from gazeseg.rasters import DepthMap, GrayImage, Mask
from gazeseg.report import ISOLATION_COMBOS, render_tables
from gazeseg.metrics import RunResult
from gazeseg.simulator import (
    ObjectSpec,
    ScenarioConfig,
    emit_scenario,
    rats_like_scenario,
    suggested_params,
)


def ok(n, name):
    print(f"criterion {n} ({name}): PASS")


def mask_range(lo, hi, shape=(40, 40)):
    bits = np.zeros(shape, dtype=bool)
    bits.flat[lo:hi] = True
    return Mask(bits)


def test_criterion_1_metric_identities():
    """1,000 random mask pairs: DSC == 2J/(1+J) to 1e-9, 0 <= J <= DSC <= 1,
    both symmetric in their arguments. Runtime under 5 s."""
    start = time.monotonic()
    rng = np.random.default_rng(0)
    done = 0
    while done < 1000:
        a = Mask(rng.random((32, 32)) < rng.uniform(0.1, 0.9))
        b = Mask(rng.random((32, 32)) < rng.uniform(0.1, 0.9))
        if a.size() == 0 or b.size() == 0:
            continue
        j, d = jaccard(a, b), dsc(a, b)
        assert abs(d - 2 * j / (1 + j)) <= 1e-9
        assert 0.0 <= j <= d <= 1.0
        assert abs(jaccard(b, a) - j) <= 1e-9
        assert abs(dsc(b, a) - d) <= 1e-9
        done += 1
    assert time.monotonic() - start < 5.0
    ok(1, "metric identities")


def test_criterion_2_size_gate_window():
    """Calibration masks of 800 and 1200 px at alpha 0.5 give the
    inclusive window [500, 1500]."""
    gate = calibrate_gate([mask_range(0, 800), mask_range(0, 1200)], alpha=0.5)
    assert gate.expected_size == 1000.0
    assert gate.s_min == 500.0 and gate.s_max == 1500.0
    assert gate.is_valid(500) and gate.is_valid(1500)
    assert not gate.is_valid(499) and not gate.is_valid(1501)
    ok(2, "size gate window")


def test_criterion_3_kalman_vs_oracle():
    """100 mixed predict/correct steps match an explicit-inverse
    textbook filter to 1e-9."""
    f = np.array([[1, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
    h = np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=float)
    q, r = 1e-2 * np.eye(4), 1e-1 * np.eye(2)
    cfg = KalmanConfig()
    assert np.array_equal(cfg.f, f) and np.array_equal(cfg.h, h)
    assert np.array_equal(cfg.q, q) and np.array_equal(cfg.r_obs, r)

    rng = np.random.default_rng(123)
    st = kf_init((1.0, 2.0))
    x, p = np.array([1.0, 2.0, 0.0, 0.0]), np.eye(4)
    for _ in range(100):
        st, _ = kf_predict(st, cfg)
        x, p = f @ x, f @ p @ f.T + q
        if rng.uniform() < 0.6:
            z = rng.uniform(-50, 50, size=2)
            st = kf_correct(st, tuple(z), cfg)
            s = h @ p @ h.T + r
            k = p @ h.T @ np.linalg.inv(s)
            x = x + k @ (z - h @ x)
            p = (np.eye(4) - k @ h) @ p
        assert np.abs(st.state - x).max() <= 1e-9
        assert np.abs(st.covariance - p).max() <= 1e-9

    # noise-free constant-velocity track: prediction error < 0.1 px after 30 steps
    st = kf_init((0.0, 0.0))
    for t in range(1, 60):
        truth = (1.5 * t, -0.7 * t)
        st, prompt = kf_predict(st, cfg)
        if t >= 30:
            assert np.hypot(prompt[0] - truth[0], prompt[1] - truth[1]) < 0.1
        st = kf_correct(st, truth, cfg)
    ok(3, "kalman filter vs oracle")


def test_criterion_4_dar_extraction():
    """Five planted peaks recovered exactly, and the dataset profile
    constants are (8, 200) and (22, 125)."""
    assert PROFILE_RATS == (8, 200.0)
    assert PROFILE_MICE == (22, 125.0)
    h, w = 90, 130
    yy, xx = np.mgrid[0:h, 0:w]
    centers = [(20, 15, 9.0), (110, 12, 8.0), (65, 45, 7.0), (15, 70, 6.0), (115, 75, 5.0)]
    vals = np.ones((h, w))
    for cx, cy, amp in centers:
        vals += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * 3.0**2))
    maxima = extract_maxima(DepthMap(vals.astype(np.float32)), DarParams(n_maxima=5, radius=18.0))
    assert [m for m, _ in maxima.points] == [(float(c[0]), float(c[1])) for c in centers]
    pts = [m for m, _ in maxima.points]
    for i in range(len(pts)):
        for k in range(i + 1, len(pts)):
            assert np.hypot(pts[i][0] - pts[k][0], pts[i][1] - pts[k][1]) > 18.0
    assert dar_refine((60.0, 48.0), maxima) == (65.0, 45.0)
    assert DarParams.for_profile("rats") == DarParams(n_maxima=8, radius=200.0)
    assert DarParams.for_profile("mice") == DarParams(n_maxima=22, radius=125.0)
    ok(4, "depth-aware maxima extraction")


def test_criterion_5_les_acceptance_rate():
    """Empirical rescue rate over 10,000 seeds within 0.05 of the
    closed form 1 - (1-q)^20 for q in {0.1, 0.3, 0.5}."""
    gate = SizeGate(expected_size=100.0, alpha=0.5)
    good = mask_range(0, 100)
    bad = mask_range(0, 3)
    for q in (0.1, 0.3, 0.5):
        hits = 0
        trials = 10_000
        for seed in range(trials):
            coin = np.random.default_rng((int(q * 10), seed))
            calls = 0

            def seg(p):
                nonlocal calls
                calls += 1
                return good if coin.uniform() < q else bad

            out = les_refine((20.0, 20.0), bad, gate, seg, LesParams(), np.random.default_rng(seed))
            hits += out.accepted
            assert calls <= 20  # provider-call budget never exceeds N
        expected = 1.0 - (1.0 - q) ** 20
        assert abs(hits / trials - expected) < 0.05

    # zero calls when the initial mask already passes the gate
    def must_not_call(p):
        raise AssertionError("no probes expected")

    out = les_refine((20.0, 20.0), good, gate, must_not_call, LesParams(), np.random.default_rng(0))
    assert out.accepted and out.probes_used == 0
    ok(5, "les acceptance rate")


def test_criterion_6_homography():
    """Corner mapping exact to 1e-6 on 100 random quads, and arena
    detection within 2 px on a rendered rectangle."""
    rng = np.random.default_rng(11)
    done = 0
    while done < 100:
        base = [(0.0, 0.0), (60.0, 0.0), (60.0, 45.0), (0.0, 45.0)]
        src = [(x + rng.uniform(-9, 9), y + rng.uniform(-9, 9)) for x, y in base]
        dst = [(x + rng.uniform(-9, 9), y + rng.uniform(-9, 9)) for x, y in base]
        try:
            Quad(tuple(src)), Quad(tuple(dst))
        except Exception:
            continue
        hom = estimate_homography(src, dst)
        inv = hom.inverse()
        for s, d in zip(src, dst):
            got = apply_homography(hom, s)
            assert abs(got[0] - d[0]) <= 1e-6 and abs(got[1] - d[1]) <= 1e-6
            back = apply_homography(inv, got)
            assert abs(back[0] - s[0]) <= 1e-6 and abs(back[1] - s[1]) <= 1e-6
        done += 1

    img = np.full((120, 160), 30, dtype=np.uint8)
    img[18:102, 25:138] = 220
    quad = detect_arena_quad(GrayImage(img), edge_threshold=50.0)
    expected = [(25, 18), (137, 18), (137, 101), (25, 101)]
    for got, want in zip(quad.corners, expected):
        assert abs(got[0] - want[0]) <= 2 and abs(got[1] - want[1]) <= 2
    hom = arena_homography(quad, 328.0, 246.0)
    assert np.allclose(apply_homography(hom, quad.corners[0]), (0.0, 0.0), atol=1e-9)
    ok(6, "homography estimation and arena detection")


def test_criterion_7_end_to_end_ordering():
    """Five seeded synthetic runs: every refinement beats baseline mean J,
    with LES above KF and DAR best; DAR+LES at least matches DAR.
    Whole experiment stays under 60 s."""
    start = time.monotonic()
    by_flags: dict[tuple, list[float]] = {}
    for seed in range(5):
        cfg = rats_like_scenario(seed=seed, duration=900, sigma=8.0, saccade_prob=0.3)
        p = suggested_params(cfg)
        ds = SimulatedDataset(cfg)
        seg, depth = ds.providers()
        series = ds.gaze_series(participant=f"p{seed + 1}")[:1]
        base = PipelineConfig(
            seed=seed,
            les=LesParams(radius=p["les_radius"]),
            dar=DarParams(n_maxima=p["dar_n_maxima"], radius=p["dar_radius"]),
        )
        grid = isolation_grid(base) + [replace(base, enable_les=True, enable_dar=True)]
        results, _ = run_experiment(ds, series, grid, seg, depth)
        for r in results:
            by_flags.setdefault(r.flags, []).append(r.mean_j)

    mean = {flags: sum(v) / len(v) for flags, v in by_flags.items()}
    baseline = mean[(False, False, False)]
    les = mean[(True, False, False)]
    kf = mean[(False, True, False)]
    dar = mean[(False, False, True)]
    dar_les = mean[(True, False, True)]
    elapsed = time.monotonic() - start

    assert baseline < kf < les < dar, (baseline, kf, les, dar)
    assert dar >= baseline + 10.0, (baseline, dar)
    assert dar <= dar_les + 1e-9, (dar, dar_les)
    assert elapsed < 60.0, f"experiment took {elapsed:.1f}s"
    ok(7, f"end-to-end ordering ({baseline:.1f} < {kf:.1f} < {les:.1f} < {dar:.1f} <= {dar_les:.1f}, {elapsed:.1f}s)")


def test_criterion_8_report_arithmetic():
    """Published-style aggregation: 38.8 -> 66.2 is a 70.6% relative
    improvement, rendered with the (+27.4) absolute delta."""
    assert relative_improvement(38.8, 66.2) == 70.6
    assert relative_improvement(27.4, 43.6) == 59.1
    results = [
        RunResult(
            participant="p1", run="0", dataset="rats",
            les=f[0], kf=f[1], dar=f[2],
            mean_j=j, mean_dsc=j, frames_scored=100,
        )
        for f, j in zip(ISOLATION_COMBOS, (38.8, 66.2, 55.0, 60.0))
    ]
    text = render_tables(results, mode="isolation")
    assert "**66.2 (+27.4)**" in text
    ok(8, "report arithmetic")


def test_criterion_9_cli_determinism(tmp_path):
    """Two identical CLI invocations produce byte-identical results.csv
    and trace logs."""
    scene = tmp_path / "scene"
    cfg = ScenarioConfig(
        width=100, height=80, duration=15,
        objects=(
            ObjectSpec(semi_axes=(8.0, 5.0), start=(30.0, 30.0), velocity=(1.0, 0.5), depth_sigma=4.0),
            ObjectSpec(semi_axes=(8.0, 5.0), start=(70.0, 50.0), velocity=(-1.0, -0.5), depth_sigma=4.0),
        ),
    )
    emit_scenario(cfg, scene)
    runner = CliRunner()
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        res = runner.invoke(
            cli_main,
            ["run", "--data", str(scene), "--grid", "isolation",
             "--dar-peaks", "2", "--dar-r", "30", "--seed", "7", "--out", str(out)],
            catch_exceptions=False,
        )
        assert res.exit_code == 0
        outs.append(out)
    a, b = outs
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    traces_a = sorted(a.glob("trace_*.jsonl"))
    assert traces_a
    for ta in traces_a:
        assert ta.read_bytes() == (b / ta.name).read_bytes()
    ok(9, "cli determinism")
