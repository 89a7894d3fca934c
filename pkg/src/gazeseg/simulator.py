"""Synthetic arena scenes with exact ground truth.

Objects are rigid ellipses under constant velocity with elastic wall
bounces; depth is a flat floor plus one Gaussian bump per object, so
object centers are depth peaks by construction. Gaze is the object
center plus Gaussian jitter and occasional saccades, which is the lever
that models good vs poor human trackers.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import netpbm
from .errors import ConfigError, DataError
from .providers import DepthProvider, FrameRef, SegmentationProvider, _check_resolution
from .rasters import (
    DepthMap,
    GrayImage,
    LabelMap,
    Mask,
    Point,
    round_half_up,
)

# 1/5 of the recording resolution, so full suites run in seconds
DESK_WIDTH = 328
DESK_HEIGHT = 246
FULL_WIDTH = 1640
FULL_HEIGHT = 1232
DEFAULT_FPS = 30

_FLOOR_INTENSITY = 40
_OBJECT_INTENSITY = 220


@dataclass(frozen=True)
class ObjectSpec:
    semi_axes: tuple[float, float]  # (a, b) pixels, x then y
    start: Point
    velocity: tuple[float, float]  # pixels per frame
    depth_amplitude: float = 2.0
    depth_sigma: float = 12.0


@dataclass(frozen=True)
class GazeModel:
    sigma: float = 8.0
    saccade_prob: float = 0.3
    saccade_amplitude: float = 20.0

    def __post_init__(self):
        if not 0.0 <= self.saccade_prob <= 1.0:
            raise ConfigError(f"saccade_prob must be in [0,1], got {self.saccade_prob}")


@dataclass(frozen=True)
class ScenarioConfig:
    width: int = DESK_WIDTH
    height: int = DESK_HEIGHT
    fps: int = DEFAULT_FPS
    duration: int = 900
    objects: tuple[ObjectSpec, ...] = ()
    floor_depth: float = 1.0
    gaze: GazeModel = field(default_factory=GazeModel)
    seed: int = 0
    profile: str = "rats"

    def __post_init__(self):
        if self.duration < 1:
            raise ConfigError(f"duration must be >= 1, got {self.duration}")
        if not self.objects:
            raise ConfigError("scenario needs at least one object")
        for i, obj in enumerate(self.objects):
            a, b = obj.semi_axes
            x, y = obj.start
            if not (a <= x <= self.width - 1 - a and b <= y <= self.height - 1 - b):
                raise ConfigError(f"object {i + 1} does not fit the frame at t=0")


@dataclass(frozen=True)
class FrameTruth:
    label_map: LabelMap
    gt_masks: tuple[Mask, ...]  # index i -> instance id i+1, post-occlusion
    depth: DepthMap


def _fold(p: float, lo: float, hi: float) -> float:
    """Position after elastic reflection between lo and hi."""
    span = hi - lo
    if span <= 0:
        return lo
    q = (p - lo) % (2.0 * span)
    return lo + (span - abs(q - span))


def object_center(cfg: ScenarioConfig, obj: ObjectSpec, t: int) -> Point:
    a, b = obj.semi_axes
    x = _fold(obj.start[0] + obj.velocity[0] * t, a, cfg.width - 1 - a)
    y = _fold(obj.start[1] + obj.velocity[1] * t, b, cfg.height - 1 - b)
    return (x, y)


def render_frame(cfg: ScenarioConfig, t: int) -> FrameTruth:
    """Exact label map, per-object masks and depth for frame t."""
    if not 0 <= t < cfg.duration:
        raise DataError(f"frame {t} outside scenario of {cfg.duration} frames")
    labels = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
    depth = np.full((cfg.height, cfg.width), cfg.floor_depth, dtype=np.float64)
    # draw high ids first so lower ids overwrite: lower id sits on top
    for i in range(len(cfg.objects) - 1, -1, -1):
        obj = cfg.objects[i]
        cx, cy = object_center(cfg, obj, t)
        a, b = obj.semi_axes
        # ellipse support, restricted to its bounding box
        x0, x1 = max(0, int(cx - a) - 1), min(cfg.width, int(cx + a) + 2)
        y0, y1 = max(0, int(cy - b) - 1), min(cfg.height, int(cy + b) + 2)
        yy, xx = np.ogrid[y0:y1, x0:x1]
        inside = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2 <= 1.0
        labels[y0:y1, x0:x1][inside] = i + 1
        # Gaussian bump, truncated at 5 sigma (below float32 resolution)
        s = obj.depth_sigma
        gx0, gx1 = max(0, int(cx - 5 * s)), min(cfg.width, int(cx + 5 * s) + 1)
        gy0, gy1 = max(0, int(cy - 5 * s)), min(cfg.height, int(cy + 5 * s) + 1)
        yy, xx = np.ogrid[gy0:gy1, gx0:gx1]
        d2 = (xx - cx) ** 2 + (yy - cy) ** 2
        depth[gy0:gy1, gx0:gx1] += obj.depth_amplitude * np.exp(-d2 / (2.0 * s * s))
    lm = LabelMap(labels)
    masks = tuple(Mask(labels == i + 1) for i in range(len(cfg.objects)))
    return FrameTruth(label_map=lm, gt_masks=masks, depth=DepthMap(depth))


def render_gray(truth: FrameTruth) -> GrayImage:
    """Display frame: bright objects on a dark floor."""
    return GrayImage(
        np.where(truth.label_map.labels > 0, _OBJECT_INTENSITY, _FLOOR_INTENSITY).astype(
            np.uint8
        )
    )


def synthesize_gaze(
    cfg: ScenarioConfig, object_id: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-frame gaze rows (x, y, valid) for one tracked object.

    Gaze = object center + N(0, sigma^2) per axis; with saccade_prob an
    extra uniform-direction offset of saccade_amplitude models an
    off-target glance. Clamped to the frame.
    """
    if not 1 <= object_id <= len(cfg.objects):
        raise DataError(f"no object {object_id} in scenario")
    obj = cfg.objects[object_id - 1]
    g = cfg.gaze
    out = np.zeros((cfg.duration, 3))
    for t in range(cfg.duration):
        cx, cy = object_center(cfg, obj, t)
        dx, dy = rng.normal(0.0, g.sigma, size=2) if g.sigma > 0 else (0.0, 0.0)
        x, y = cx + dx, cy + dy
        if g.saccade_prob > 0 and rng.random() < g.saccade_prob:
            angle = rng.uniform(0.0, 2.0 * math.pi)
            x += g.saccade_amplitude * math.cos(angle)
            y += g.saccade_amplitude * math.sin(angle)
        out[t] = (
            min(max(x, 0.0), cfg.width - 1.0),
            min(max(y, 0.0), cfg.height - 1.0),
            1.0,
        )
    return out


def gaze_rng(cfg: ScenarioConfig, object_id: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, object_id])


# ---------------------------------------------------------------------------
# scenario profiles
# ---------------------------------------------------------------------------


def rats_like_scenario(seed: int = 0, duration: int = 900, **gaze_kw) -> ScenarioConfig:
    """Two large slow objects, desk-scale frame."""
    return ScenarioConfig(
        duration=duration,
        objects=(
            ObjectSpec(semi_axes=(13.0, 8.0), start=(80.0, 70.0), velocity=(1.3, 0.8), depth_sigma=6.0),
            ObjectSpec(semi_axes=(13.0, 8.0), start=(240.0, 170.0), velocity=(-0.9, -1.1), depth_sigma=6.0),
        ),
        gaze=GazeModel(**gaze_kw),
        seed=seed,
        profile="rats",
    )


def mice_like_scenario(seed: int = 0, duration: int = 900, **gaze_kw) -> ScenarioConfig:
    """Four small fast objects, desk-scale frame."""
    return ScenarioConfig(
        duration=duration,
        objects=(
            ObjectSpec(semi_axes=(12.0, 7.0), start=(60.0, 50.0), velocity=(2.1, 1.4), depth_sigma=8.0),
            ObjectSpec(semi_axes=(12.0, 7.0), start=(260.0, 60.0), velocity=(-1.7, 2.0), depth_sigma=8.0),
            ObjectSpec(semi_axes=(12.0, 7.0), start=(70.0, 190.0), velocity=(1.9, -1.6), depth_sigma=8.0),
            ObjectSpec(semi_axes=(12.0, 7.0), start=(250.0, 180.0), velocity=(-2.2, -1.3), depth_sigma=8.0),
        ),
        gaze=GazeModel(sigma=gaze_kw.pop("sigma", 6.0), **gaze_kw),
        seed=seed,
        profile="mice",
    )


def suggested_params(cfg: ScenarioConfig) -> dict:
    """Refinement parameters recorded in the manifest, adapted to the
    scene: the profile table values assume 1640x1232 frames, and the
    sampling radius must cover the modeled saccade scale."""
    scale = cfg.width / FULL_WIDTH
    table_n, table_r = (8, 200.0) if cfg.profile == "rats" else (22, 125.0)
    return {
        "les_radius": max(cfg.gaze.saccade_amplitude + 5.0, 10.0),
        "dar_n_maxima": table_n,
        "dar_radius": max(table_r * scale, 10.0),
    }


# ---------------------------------------------------------------------------
# on-disk emission
# ---------------------------------------------------------------------------


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_manifest(cfg: ScenarioConfig, path: Path) -> None:
    lines = ["[scenario]"]
    for key in ("width", "height", "fps", "duration", "floor_depth", "seed", "profile"):
        lines.append(f"{key} = {_toml_value(getattr(cfg, key))}")
    lines += [
        "",
        "[scenario.gaze]",
        f"sigma = {_toml_value(cfg.gaze.sigma)}",
        f"saccade_prob = {_toml_value(cfg.gaze.saccade_prob)}",
        f"saccade_amplitude = {_toml_value(cfg.gaze.saccade_amplitude)}",
    ]
    for obj in cfg.objects:
        lines += [
            "",
            "[[scenario.objects]]",
            f"semi_axes = {_toml_value(list(obj.semi_axes))}",
            f"start = {_toml_value(list(obj.start))}",
            f"velocity = {_toml_value(list(obj.velocity))}",
            f"depth_amplitude = {_toml_value(obj.depth_amplitude)}",
            f"depth_sigma = {_toml_value(obj.depth_sigma)}",
        ]
    params = suggested_params(cfg)
    lines += [
        "",
        "[defaults]",
        f"les_radius = {_toml_value(params['les_radius'])}",
        f"dar_n_maxima = {_toml_value(params['dar_n_maxima'])}",
        f"dar_radius = {_toml_value(params['dar_radius'])}",
        "",
        "[layout]",
        f'frame = "{netpbm.FRAME_PATTERN}"',
        f'labels = "{netpbm.LABELS_PATTERN}"',
        f'depth = "{netpbm.DEPTH_PATTERN}"',
        f'gt = "{netpbm.GT_PATTERN}"',
        f'gaze = "{netpbm.GAZE_PATTERN}"',
        "",
    ]
    path.write_text("\n".join(lines))


def load_manifest(data_dir: Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    path = Path(data_dir) / "manifest.toml"
    if not path.exists():
        raise DataError(f"no manifest.toml in {data_dir}")
    with open(path, "rb") as f:
        return tomllib.load(f)


def scenario_from_manifest(doc: dict) -> ScenarioConfig:
    sc = doc.get("scenario", {})
    try:
        objects = tuple(
            ObjectSpec(
                semi_axes=tuple(o["semi_axes"]),
                start=tuple(o["start"]),
                velocity=tuple(o["velocity"]),
                depth_amplitude=o.get("depth_amplitude", 2.0),
                depth_sigma=o.get("depth_sigma", 12.0),
            )
            for o in sc.get("objects", [])
        )
        gz = sc.get("gaze", {})
        return ScenarioConfig(
            width=sc["width"],
            height=sc["height"],
            fps=sc.get("fps", DEFAULT_FPS),
            duration=sc["duration"],
            objects=objects,
            floor_depth=sc.get("floor_depth", 1.0),
            gaze=GazeModel(
                sigma=gz.get("sigma", 8.0),
                saccade_prob=gz.get("saccade_prob", 0.3),
                saccade_amplitude=gz.get("saccade_amplitude", 60.0),
            ),
            seed=sc.get("seed", 0),
            profile=sc.get("profile", "rats"),
        )
    except KeyError as exc:
        raise DataError(f"manifest missing key {exc}") from exc


def format_gaze_csv(series: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("frame,x,y,valid\n")
    for t, (x, y, valid) in enumerate(series):
        buf.write(f"{t},{x:.3f},{y:.3f},{int(valid)}\n")
    return buf.getvalue()


def emit_scenario(cfg: ScenarioConfig, out_dir: str | Path) -> Path:
    """Write the full file tree: frames, labels, depth, per-object GT
    masks, gaze CSVs and the manifest. Deterministic for a fixed cfg."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t in range(cfg.duration):
        truth = render_frame(cfg, t)
        (out / (netpbm.FRAME_PATTERN % t)).write_bytes(
            netpbm.write_gray(render_gray(truth))
        )
        (out / (netpbm.LABELS_PATTERN % t)).write_bytes(
            netpbm.write_label_map(truth.label_map)
        )
        (out / (netpbm.DEPTH_PATTERN % t)).write_bytes(netpbm.write_pfm(truth.depth))
        for i, gt in enumerate(truth.gt_masks):
            (out / (netpbm.GT_PATTERN % (t, i + 1))).write_bytes(netpbm.write_mask(gt))
    for i in range(1, len(cfg.objects) + 1):
        series = synthesize_gaze(cfg, i, gaze_rng(cfg, i))
        (out / (netpbm.GAZE_PATTERN % i)).write_text(format_gaze_csv(series))
    write_manifest(cfg, out / "manifest.toml")
    return out


# ---------------------------------------------------------------------------
# in-memory providers over a scenario (no file tree needed)
# ---------------------------------------------------------------------------

_CROSS = ndimage.generate_binary_structure(2, 1)


class SimulatedScene:
    """Caches rendered truth per frame for fast repeated access."""

    def __init__(self, cfg: ScenarioConfig, cache_frames: int = 8):
        self.cfg = cfg
        self.truth = lru_cache(maxsize=cache_frames)(lambda t: render_frame(cfg, t))
        # (frame, instance id) -> component labeling of that id's support
        self._value_comps = lru_cache(maxsize=4 * cache_frames)(self._label_value)

    def _label_value(self, t: int, value: int) -> np.ndarray:
        labels = self.truth(t).label_map.labels
        comps, _ = ndimage.label(labels == value, structure=_CROSS)
        return comps

    def component_at(self, t: int, p: Point) -> Mask:
        labels = self.truth(t).label_map.labels
        x, y = round_half_up(p[0]), round_half_up(p[1])
        h, w = labels.shape
        if not (0 <= x < w and 0 <= y < h):
            raise DataError(f"prompt ({p[0]}, {p[1]}) outside {w}x{h} frame")
        comps = self._value_comps(t, int(labels[y, x]))
        return Mask(comps == comps[y, x])


class SimulatedSegmentationProvider(SegmentationProvider):
    def __init__(self, scene: SimulatedScene):
        self.scene = scene

    def segment(self, frame: FrameRef, p: Point) -> Mask:
        mask = self.scene.component_at(frame.frame_index, p)
        return _check_resolution(mask, frame, "mask")


class SimulatedDepthProvider(DepthProvider):
    def __init__(self, scene: SimulatedScene):
        self.scene = scene

    def depth(self, frame: FrameRef) -> DepthMap:
        return _check_resolution(
            self.scene.truth(frame.frame_index).depth, frame, "depth map"
        )
