"""TOML run configuration: file values, manifest defaults and CLI
overrides resolved into pipeline and provider settings.

Precedence, highest first: CLI flag, config file, dataset manifest
defaults, profile table, built-in default.
"""

from __future__ import annotations

from pathlib import Path

from . import netpbm
from .dar import PROFILE_MICE, PROFILE_RATS, DarParams
from .errors import ConfigError, DataError, ProviderError
from .gate import DEFAULT_ALPHA
from .geometry import Homography, Quad, arena_homography, detect_arena_quad, estimate_homography
from .kalman import DEFAULT_INITIAL_VAR, DEFAULT_Q_SCALE, DEFAULT_R_SCALE, KalmanConfig
from .les import DEFAULT_N_CANDIDATES, RADIUS_MICE, RADIUS_RATS, LesParams
from .pipeline import PipelineConfig
from .providers import (
    DEFAULT_EXEC_TIMEOUT_S,
    DepthProvider,
    ExecProvider,
    FileDepthProvider,
    LabelMapProvider,
    SegmentationProvider,
)


def load_config_file(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML in {path}: {exc}") from exc


def _get(doc: dict, dotted: str, default=None):
    node = doc
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def _profile_params(profile: str) -> tuple[float, int, float]:
    """(les radius, dar n_maxima, dar radius) from the dataset profile."""
    if profile == "rats":
        return RADIUS_RATS, *PROFILE_RATS
    if profile == "mice":
        return RADIUS_MICE, *PROFILE_MICE
    raise ConfigError(f"unknown dataset profile {profile!r}")


def build_pipeline_config(
    doc: dict,
    manifest_defaults: dict | None = None,
    overrides: dict | None = None,
) -> PipelineConfig:
    overrides = overrides or {}
    defaults = manifest_defaults or {}
    profile = overrides.get("profile") or _get(doc, "dataset.profile", "rats")
    prof_les_r, prof_dar_n, prof_dar_r = _profile_params(profile)

    def pick(key: str, doc_key: str, manifest_key: str | None, fallback):
        if overrides.get(key) is not None:
            return overrides[key]
        v = _get(doc, doc_key)
        if v is not None:
            return v
        if manifest_key is not None and manifest_key in defaults:
            return defaults[manifest_key]
        return fallback

    alpha = float(pick("alpha", "gate.alpha", None, DEFAULT_ALPHA))
    les = LesParams(
        n_candidates=int(pick("les_n", "les.n", None, DEFAULT_N_CANDIDATES)),
        radius=float(pick("les_radius", "les.radius", "les_radius", prof_les_r)),
    )
    dar = DarParams(
        n_maxima=int(pick("dar_peaks", "dar.n_maxima", "dar_n_maxima", prof_dar_n)),
        radius=float(pick("dar_radius", "dar.radius", "dar_radius", prof_dar_r)),
    )
    kf = KalmanConfig.from_scales(
        q_scale=float(_get(doc, "kf.q_scale", DEFAULT_Q_SCALE)),
        r_scale=float(_get(doc, "kf.r_scale", DEFAULT_R_SCALE)),
    )
    return PipelineConfig(
        enable_les=bool(pick("les", "les.enabled", None, False)),
        enable_kf=bool(pick("kf", "kf.enabled", None, False)),
        enable_dar=bool(pick("dar", "dar.enabled", None, False)),
        alpha=alpha,
        les=les,
        kf=kf,
        kf_initial_var=float(_get(doc, "kf.initial_var", DEFAULT_INITIAL_VAR)),
        dar=dar,
        arena_h=None,
        seed=int(pick("seed", "seed", None, 0)),
    )


def build_arena_homography(doc: dict, data_dir: Path, resolution) -> Homography | None:
    """Optional scene-to-arena transform; off unless arena.enabled."""
    if not _get(doc, "arena.enabled", False):
        return None
    target = _get(doc, "arena.target", list(resolution))
    corners = _get(doc, "arena.corners")
    if corners is not None:
        quad = Quad(tuple((float(x), float(y)) for x, y in corners))
    else:
        frame_path = data_dir / (netpbm.FRAME_PATTERN % 0)
        try:
            img = netpbm.read_gray(frame_path.read_bytes())
        except FileNotFoundError as exc:
            raise DataError(f"arena detection needs {frame_path}") from exc
        quad = detect_arena_quad(img, float(_get(doc, "arena.edge_threshold", 40.0)))
    return arena_homography(quad, float(target[0]), float(target[1]))


def build_providers(
    doc: dict, data_dir: Path
) -> tuple[SegmentationProvider, DepthProvider]:
    seg_kind = _get(doc, "provider.segmenter", "labelmap")
    if seg_kind == "labelmap":
        seg: SegmentationProvider = LabelMapProvider(data_dir)
    elif seg_kind == "exec":
        cmd = _get(doc, "provider.exec.cmd")
        if not cmd:
            raise ConfigError("provider.exec.cmd required for the exec segmenter")
        if isinstance(cmd, str):
            cmd = cmd.split()
        import shutil

        if shutil.which(cmd[0]) is None:
            raise ProviderError(f"provider executable not found: {cmd[0]}")
        seg = ExecProvider(cmd, timeout_s=float(_get(doc, "provider.exec.timeout_s", DEFAULT_EXEC_TIMEOUT_S)))
    else:
        raise ConfigError(f"unknown segmenter {seg_kind!r}")

    depth_kind = _get(doc, "provider.depth", "file")
    if depth_kind == "file":
        # provider.depth is a string, so the flip flag lives beside it
        depth: DepthProvider = FileDepthProvider(
            data_dir, flip=bool(_get(doc, "provider.depth_flip", False))
        )
    elif depth_kind == "exec":
        if isinstance(seg, ExecProvider):
            depth = seg
        else:
            raise ConfigError("exec depth requires the exec segmenter")
    elif depth_kind == "synthetic":
        from .simulator import (
            SimulatedDepthProvider,
            SimulatedScene,
            load_manifest,
            scenario_from_manifest,
        )

        scenario = scenario_from_manifest(load_manifest(data_dir))
        depth = SimulatedDepthProvider(SimulatedScene(scenario))
    else:
        raise ConfigError(f"unknown depth provider {depth_kind!r}")
    return seg, depth
