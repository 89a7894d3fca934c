import numpy as np
import pytest

from gazeseg import netpbm
from gazeseg.errors import ConfigError
from gazeseg.providers import FrameRef
from gazeseg.simulator import (
    GazeModel,
    ObjectSpec,
    ScenarioConfig,
    SimulatedDepthProvider,
    SimulatedScene,
    SimulatedSegmentationProvider,
    _fold,
    emit_scenario,
    format_gaze_csv,
    gaze_rng,
    load_manifest,
    mice_like_scenario,
    object_center,
    rats_like_scenario,
    render_frame,
    scenario_from_manifest,
    suggested_params,
    synthesize_gaze,
)


def small_scenario(duration=20, **kw):
    return ScenarioConfig(
        width=100,
        height=80,
        duration=duration,
        objects=(
            ObjectSpec(semi_axes=(8.0, 5.0), start=(30.0, 30.0), velocity=(2.0, 1.0), depth_sigma=4.0),
            ObjectSpec(semi_axes=(8.0, 5.0), start=(70.0, 50.0), velocity=(-1.5, -0.5), depth_sigma=4.0),
        ),
        **kw,
    )


class TestMotion:
    def test_linear_before_first_bounce(self):
        cfg = small_scenario()
        assert object_center(cfg, cfg.objects[0], 0) == (30.0, 30.0)
        assert object_center(cfg, cfg.objects[0], 3) == (36.0, 33.0)

    def test_fold_reflects_elastically(self):
        # walk p past hi and check mirror symmetry
        assert _fold(5.0, 0.0, 10.0) == 5.0
        assert _fold(12.0, 0.0, 10.0) == 8.0
        assert _fold(-3.0, 0.0, 10.0) == 3.0
        assert _fold(23.0, 0.0, 10.0) == 3.0  # two reflections

    def test_centers_never_leave_margin(self):
        cfg = small_scenario(duration=500)
        for obj in cfg.objects:
            a, b = obj.semi_axes
            for t in range(0, 500, 7):
                x, y = object_center(cfg, obj, t)
                assert a <= x <= cfg.width - 1 - a
                assert b <= y <= cfg.height - 1 - b

    def test_object_must_fit_at_start(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(
                width=20,
                height=20,
                duration=5,
                objects=(ObjectSpec(semi_axes=(15.0, 5.0), start=(10.0, 10.0), velocity=(0.0, 0.0)),),
            )


class TestRenderFrame:
    def test_labels_match_ellipse_membership(self):
        cfg = small_scenario()
        truth = render_frame(cfg, 0)
        cx, cy = object_center(cfg, cfg.objects[0], 0)
        a, b = cfg.objects[0].semi_axes
        yy, xx = np.mgrid[0 : cfg.height, 0 : cfg.width]
        inside = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2 <= 1.0
        # object 2 does not overlap object 1 at t=0, so ids are exact
        assert np.array_equal(truth.label_map.labels == 1, inside)

    def test_lower_id_on_top_when_overlapping(self):
        cfg = ScenarioConfig(
            width=60,
            height=60,
            duration=2,
            objects=(
                ObjectSpec(semi_axes=(10.0, 10.0), start=(28.0, 30.0), velocity=(0.0, 0.0)),
                ObjectSpec(semi_axes=(10.0, 10.0), start=(34.0, 30.0), velocity=(0.0, 0.0)),
            ),
        )
        truth = render_frame(cfg, 0)
        assert truth.label_map.labels[30, 30] == 1  # overlap region keeps id 1
        assert truth.gt_masks[1].size() < truth.gt_masks[0].size()  # occluded GT

    def test_depth_argmax_at_object_center(self):
        """Exhaustive check: with one object the global depth argmax sits
        within 1 px of the center on every frame. (With several objects
        overlapping bumps can shift the summed peak slightly.)"""
        cfg = ScenarioConfig(
            width=100,
            height=80,
            duration=30,
            objects=(
                ObjectSpec(semi_axes=(8.0, 5.0), start=(30.0, 30.0), velocity=(2.0, 1.0), depth_sigma=4.0),
            ),
        )
        for t in range(30):
            truth = render_frame(cfg, t)
            flat = int(np.argmax(truth.depth.values))
            py, px = divmod(flat, cfg.width)
            cx, cy = object_center(cfg, cfg.objects[0], t)
            assert np.hypot(px - cx, py - cy) <= 1.0

    def test_floor_is_flat_far_from_objects(self):
        cfg = small_scenario()
        truth = render_frame(cfg, 0)
        # corners are > 5 sigma from both bump centers
        assert truth.depth.values[0, 99] == cfg.floor_depth
        assert truth.depth.values[79, 0] == cfg.floor_depth


class TestGaze:
    def test_shape_and_validity(self):
        cfg = small_scenario(duration=50)
        g = synthesize_gaze(cfg, 1, gaze_rng(cfg, 1))
        assert g.shape == (50, 3)
        assert (g[:, 2] == 1.0).all()
        assert (g[:, 0] >= 0).all() and (g[:, 0] <= cfg.width - 1).all()

    def test_jitter_std_matches_model(self):
        """Without saccades, gaze minus center is N(0, sigma^2); the
        sample std over 900 frames should be near sigma."""
        cfg = small_scenario(
            duration=900, gaze=GazeModel(sigma=5.0, saccade_prob=0.0)
        )
        g = synthesize_gaze(cfg, 1, gaze_rng(cfg, 1))
        centers = np.array([object_center(cfg, cfg.objects[0], t) for t in range(900)])
        resid = g[:, :2] - centers
        assert 4.0 <= resid[:, 0].std() <= 6.0
        assert 4.0 <= resid[:, 1].std() <= 6.0

    def test_deterministic_per_seed_and_object(self):
        cfg = small_scenario(duration=40, seed=3)
        a = synthesize_gaze(cfg, 1, gaze_rng(cfg, 1))
        b = synthesize_gaze(cfg, 1, gaze_rng(cfg, 1))
        c = synthesize_gaze(cfg, 2, gaze_rng(cfg, 2))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_csv_format(self):
        rows = np.array([[10.0, 20.5, 1.0], [11.25, 21.0, 0.0]])
        text = format_gaze_csv(rows)
        assert text.splitlines() == [
            "frame,x,y,valid",
            "0,10.000,20.500,1",
            "1,11.250,21.000,0",
        ]


class TestProfiles:
    def test_rats_like(self):
        cfg = rats_like_scenario(seed=1)
        assert len(cfg.objects) == 2
        assert cfg.profile == "rats"
        assert (cfg.width, cfg.height) == (328, 246)

    def test_mice_like(self):
        cfg = mice_like_scenario()
        assert len(cfg.objects) == 4
        assert cfg.profile == "mice"

    def test_suggested_params_scale_table_values(self):
        p = suggested_params(rats_like_scenario())
        assert p["dar_n_maxima"] == 8
        assert p["dar_radius"] == 200.0 * 328 / 1640
        assert p["les_radius"] == 25.0  # saccade amplitude 20 + margin
        p = suggested_params(mice_like_scenario())
        assert p["dar_n_maxima"] == 22
        assert p["dar_radius"] == 125.0 * 328 / 1640


class TestEmission:
    def test_file_tree_and_manifest(self, tmp_path):
        cfg = small_scenario(duration=3)
        emit_scenario(cfg, tmp_path)
        assert sorted(p.name for p in tmp_path.glob("frame_*.pgm")) == [
            "frame_%06d.pgm" % t for t in range(3)
        ]
        assert len(list(tmp_path.glob("labels_*.pgm"))) == 3
        assert len(list(tmp_path.glob("depth_*.pfm"))) == 3
        assert len(list(tmp_path.glob("gt_*_obj*.pgm"))) == 6  # 3 frames x 2 objects
        assert len(list(tmp_path.glob("gaze_obj*.csv"))) == 2
        doc = load_manifest(tmp_path)
        rebuilt = scenario_from_manifest(doc)
        assert rebuilt == cfg
        assert doc["defaults"]["dar_n_maxima"] == 8

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = small_scenario(duration=2)
        a, b = tmp_path / "a", tmp_path / "b"
        emit_scenario(cfg, a)
        emit_scenario(cfg, b)
        for fa in sorted(a.iterdir()):
            assert fa.read_bytes() == (b / fa.name).read_bytes()

    def test_emitted_gt_matches_render(self, tmp_path):
        cfg = small_scenario(duration=2)
        emit_scenario(cfg, tmp_path)
        truth = render_frame(cfg, 1)
        data = (tmp_path / (netpbm.GT_PATTERN % (1, 2))).read_bytes()
        assert np.array_equal(netpbm.read_mask(data).bits, truth.gt_masks[1].bits)


class TestSimulatedProviders:
    def test_segmentation_matches_gt(self):
        cfg = small_scenario()
        scene = SimulatedScene(cfg)
        seg = SimulatedSegmentationProvider(scene)
        frame = FrameRef(run_id="r", frame_index=0, resolution=(100, 80), data_dir=None)
        cx, cy = object_center(cfg, cfg.objects[1], 0)
        m = seg.segment(frame, (cx, cy))
        assert np.array_equal(m.bits, render_frame(cfg, 0).gt_masks[1].bits)

    def test_depth_provider(self):
        cfg = small_scenario()
        scene = SimulatedScene(cfg)
        d = SimulatedDepthProvider(scene).depth(
            FrameRef(run_id="r", frame_index=2, resolution=(100, 80), data_dir=None)
        )
        assert np.array_equal(d.values, render_frame(cfg, 2).depth.values)
