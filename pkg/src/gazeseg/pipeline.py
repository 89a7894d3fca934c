"""Per-frame orchestration of the gate and the three refiners, plus the
experiment driver that mirrors the isolation / combination grids.

Stage order within a frame: optional arena transform of the gaze, then
depth-aware relocation, then segmentation + size gate, then local
exploratory sampling on failure, then the Kalman prediction as last
resort. The filter is corrected only on frames whose final mask passes
the gate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import netpbm
from .dar import DarParams, dar_refine, extract_maxima
from .errors import DataError, ProviderError
from .gate import DEFAULT_ALPHA, SizeGate, calibrate_gate
from .geometry import Homography, apply_homography
from .kalman import (
    DEFAULT_INITIAL_VAR,
    UNINITIALIZED,
    KalmanConfig,
    KalmanState,
    kf_correct,
    kf_init,
    kf_predict,
)
from .les import LesParams, RefineOutcome, les_refine
from .metrics import FrameScore, RunResult, from_frame_scores, score_frame
from .providers import DepthProvider, FrameRef, SegmentationProvider
from .rasters import Mask, Point
from .simulator import (
    ScenarioConfig,
    SimulatedDepthProvider,
    SimulatedScene,
    SimulatedSegmentationProvider,
    gaze_rng,
    load_manifest,
    scenario_from_manifest,
    synthesize_gaze,
)


@dataclass(frozen=True)
class PipelineConfig:
    enable_les: bool = False
    enable_kf: bool = False
    enable_dar: bool = False
    alpha: float = DEFAULT_ALPHA
    les: LesParams = field(default_factory=LesParams)
    kf: KalmanConfig = field(default_factory=KalmanConfig)
    kf_initial_var: float = DEFAULT_INITIAL_VAR
    dar: DarParams = field(default_factory=lambda: DarParams(n_maxima=8, radius=200.0))
    arena_h: Homography | None = None
    seed: int = 0

    def flags(self) -> tuple[bool, bool, bool]:
        return (self.enable_les, self.enable_kf, self.enable_dar)

    def flag_label(self) -> str:
        names = [n for n, f in zip(("les", "kf", "dar"), self.flags()) if f]
        return "+".join(names) if names else "baseline"


@dataclass(frozen=True)
class PromptState:
    object_id: int
    prompt: Point | None = None  # last emitted prompt, for invalid-gaze holds
    kalman: KalmanState = UNINITIALIZED
    last_outcome: RefineOutcome | None = None


def _empty_mask(resolution: tuple[int, int]) -> Mask:
    w, h = resolution
    return Mask(np.zeros((h, w), dtype=bool))


def process_frame(
    state: PromptState,
    gaze: Point | None,
    frame: FrameRef,
    seg: SegmentationProvider,
    depth: DepthProvider | None,
    gate: SizeGate,
    cfg: PipelineConfig,
) -> tuple[PromptState, Mask, dict]:
    """Run one frame; returns the new state, the emitted mask and a
    trace record sufficient to replay the frame standalone."""
    t = frame.frame_index
    trace: dict = {"frame": t, "stage": "baseline", "probes_used": 0}
    kstate = state.kalman
    if kstate.initialized:
        trace["kf_state"] = [float(v) for v in kstate.state]
        trace["kf_cov"] = [[float(v) for v in row] for row in kstate.covariance]

    # invalid-gaze policy: hold the last prompt, or skip when none yet
    if gaze is None:
        trace["gaze"] = None
        if state.prompt is None:
            trace["stage"] = "skipped"
            trace["final_valid"] = False
            return state, _empty_mask(frame.resolution), trace
        prompt: Point = state.prompt
        trace["held_prompt"] = [prompt[0], prompt[1]]
    else:
        trace["gaze"] = [gaze[0], gaze[1]]  # pre-transform, so replay re-applies
        if cfg.arena_h is not None:
            gaze = apply_homography(cfg.arena_h, gaze)
        prompt = gaze

    try:
        if cfg.enable_dar:
            maxima = extract_maxima(depth.depth(frame), cfg.dar)
            prompt = dar_refine(prompt, maxima)
            trace["dar_prompt"] = [prompt[0], prompt[1]]

        mask = seg.segment(frame, prompt)
        valid = gate.is_valid_mask(mask)

        if not valid and cfg.enable_les:
            rng = np.random.default_rng(cfg.seed ^ t)
            outcome = les_refine(prompt, mask, gate, lambda p: seg.segment(frame, p), cfg.les, rng)
            trace["probes_used"] = outcome.probes_used
            if outcome.accepted:
                prompt, mask, valid = outcome.prompt, outcome.mask, True
                trace["stage"] = "les"

        used_kf_prediction = False
        if not valid and cfg.enable_kf and kstate.initialized:
            predicted, kf_prompt = kf_predict(kstate, cfg.kf)
            w, h = frame.resolution
            kf_prompt = (
                min(max(kf_prompt[0], 0.0), w - 1.0),
                min(max(kf_prompt[1], 0.0), h - 1.0),
            )
            kf_mask = seg.segment(frame, kf_prompt)
            if gate.is_valid_mask(kf_mask):
                prompt, mask, valid = kf_prompt, kf_mask, True
                kstate = predicted
                used_kf_prediction = True
                trace["stage"] = "kf"
            # prediction rejected: state held, no covariance inflation

        if valid and cfg.enable_kf:
            if not kstate.initialized:
                kstate = kf_init(prompt, cfg.kf_initial_var)
            else:
                if not used_kf_prediction:
                    kstate, _ = kf_predict(kstate, cfg.kf)
                kstate = kf_correct(kstate, prompt, cfg.kf)
    except ProviderError as exc:
        trace["stage"] = "failed"
        trace["error"] = str(exc)
        trace["final_valid"] = False
        return replace(state, last_outcome=None), _empty_mask(frame.resolution), trace

    if not valid:
        trace["stage"] = "invalid"

    trace["prompt"] = [prompt[0], prompt[1]]
    trace["mask_size"] = mask.size()
    trace["final_valid"] = valid
    new_state = PromptState(
        object_id=state.object_id,
        prompt=prompt,
        kalman=kstate,
        last_outcome=RefineOutcome(
            prompt=prompt, mask=mask, accepted=valid, probes_used=trace["probes_used"]
        ),
    )
    return new_state, mask, trace


# ---------------------------------------------------------------------------
# datasets and gaze series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GazeSeries:
    participant: str
    run: str
    object_id: int
    rows: np.ndarray  # (n, 3): x, y, valid

    def point(self, t: int) -> Point | None:
        if t >= len(self.rows):
            return None
        x, y, valid = self.rows[t]
        return (float(x), float(y)) if valid else None


def parse_gaze_csv(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "frame,x,y,valid":
        raise DataError(f"unexpected gaze header {lines[:1]!r}")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 4:
            raise DataError(f"bad gaze row {ln!r}")
        rows.append((float(parts[1]), float(parts[2]), float(parts[3])))
    return np.asarray(rows)


def parse_gaze_filename(name: str) -> tuple[str, str, int]:
    """(participant, run, object id) from names like gaze_obj01.csv or
    p3_r1_gaze_obj02.csv; unprefixed files default to participant p1 run 0."""
    import re

    m = re.search(r"gaze_obj(\d+)\.csv$", name)
    if not m:
        raise DataError(f"cannot parse object id from gaze file {name!r}")
    object_id = int(m.group(1))
    pm = re.match(r"p(\w+?)_r(\w+?)_", name)
    if pm:
        return (f"p{pm.group(1)}", pm.group(2), object_id)
    return ("p1", "0", object_id)


class Dataset:
    """What a run needs from the data: frames, ground truth, geometry."""

    resolution: tuple[int, int]
    n_frames: int
    run_id: str
    profile: str

    def frame_ref(self, t: int) -> FrameRef:
        raise NotImplementedError

    def gt_mask(self, t: int, object_id: int) -> Mask:
        raise NotImplementedError

    def first_frame_gt(self) -> list[Mask]:
        raise NotImplementedError


class DiskDataset(Dataset):
    """Scenario tree on disk, described by its manifest."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        doc = load_manifest(self.data_dir)
        self.scenario = scenario_from_manifest(doc)
        self.manifest = doc
        self.resolution = (self.scenario.width, self.scenario.height)
        self.n_frames = self.scenario.duration
        self.n_objects = len(self.scenario.objects)
        self.run_id = self.data_dir.name
        self.profile = self.scenario.profile

    def frame_ref(self, t: int) -> FrameRef:
        return FrameRef(
            run_id=self.run_id,
            frame_index=t,
            resolution=self.resolution,
            data_dir=self.data_dir,
        )

    def gt_mask(self, t: int, object_id: int) -> Mask:
        path = self.data_dir / (netpbm.GT_PATTERN % (t, object_id))
        try:
            return netpbm.read_mask(path.read_bytes())
        except FileNotFoundError as exc:
            raise DataError(f"missing ground truth {path}") from exc

    def first_frame_gt(self) -> list[Mask]:
        return [self.gt_mask(0, i + 1) for i in range(self.n_objects)]

    def gaze_series(self) -> list[GazeSeries]:
        out = []
        for path in sorted(self.data_dir.glob("*gaze_obj*.csv")):
            participant, run, object_id = parse_gaze_filename(path.name)
            out.append(
                GazeSeries(
                    participant=participant,
                    run=run,
                    object_id=object_id,
                    rows=parse_gaze_csv(path.read_text()),
                )
            )
        if not out:
            raise DataError(f"no gaze CSVs in {self.data_dir}")
        return out


class SimulatedDataset(Dataset):
    """In-memory scenario; provides its own oracle providers."""

    def __init__(self, cfg: ScenarioConfig, run_id: str = "sim"):
        self.scenario = cfg
        self.scene = SimulatedScene(cfg)
        self.resolution = (cfg.width, cfg.height)
        self.n_frames = cfg.duration
        self.n_objects = len(cfg.objects)
        self.run_id = run_id
        self.profile = cfg.profile

    def frame_ref(self, t: int) -> FrameRef:
        return FrameRef(
            run_id=self.run_id,
            frame_index=t,
            resolution=self.resolution,
            data_dir=Path("."),
        )

    def gt_mask(self, t: int, object_id: int) -> Mask:
        return self.scene.truth(t).gt_masks[object_id - 1]

    def first_frame_gt(self) -> list[Mask]:
        return [self.gt_mask(0, i + 1) for i in range(self.n_objects)]

    def providers(self) -> tuple[SegmentationProvider, DepthProvider]:
        return SimulatedSegmentationProvider(self.scene), SimulatedDepthProvider(self.scene)

    def gaze_series(self, participant: str = "p1", run: str = "0") -> list[GazeSeries]:
        return [
            GazeSeries(
                participant=participant,
                run=run,
                object_id=i,
                rows=synthesize_gaze(self.scenario, i, gaze_rng(self.scenario, i)),
            )
            for i in range(1, self.n_objects + 1)
        ]


# ---------------------------------------------------------------------------
# runs and experiments
# ---------------------------------------------------------------------------


def run_series(
    dataset: Dataset,
    series: GazeSeries,
    cfg: PipelineConfig,
    seg: SegmentationProvider,
    depth: DepthProvider | None,
    gate: SizeGate,
) -> tuple[list[FrameScore], list[dict]]:
    """Process every frame of one gaze series under one config."""
    if cfg.enable_dar and depth is None:
        raise DataError("depth-aware refinement enabled but no depth provider")
    state = PromptState(object_id=series.object_id)
    scores: list[FrameScore] = []
    traces: list[dict] = []
    for t in range(dataset.n_frames):
        frame = dataset.frame_ref(t)
        state, mask, trace = process_frame(
            state, series.point(t), frame, seg, depth, gate, cfg
        )
        gt = dataset.gt_mask(t, series.object_id)
        if trace["stage"] == "skipped":
            score = FrameScore(frame_index=t)  # scored 0 by policy
        else:
            score = score_frame(mask, gt, t)
        trace["j"] = score.j if score.valid else None
        scores.append(score)
        traces.append(trace)
    if all(t["stage"] == "failed" for t in traces):
        raise ProviderError(
            f"provider failed on every frame; first error: {traces[0].get('error')}"
        )
    return scores, traces


def run_experiment(
    dataset: Dataset,
    series_list: list[GazeSeries],
    configs: list[PipelineConfig],
    seg: SegmentationProvider,
    depth: DepthProvider | None,
) -> tuple[list[RunResult], dict[str, list[dict]]]:
    """Every (gaze series, config) pair becomes one RunResult.

    The gate is calibrated once from the frame-0 ground-truth masks.
    """
    if not series_list:
        raise DataError("no gaze series")
    first_gt = dataset.first_frame_gt()  # raises before any processing
    results: list[RunResult] = []
    traces: dict[str, list[dict]] = {}
    for cfg in configs:
        gate = calibrate_gate(first_gt, cfg.alpha)
        for series in series_list:
            scores, series_traces = run_series(dataset, series, cfg, seg, depth, gate)
            results.append(
                from_frame_scores(
                    participant=series.participant,
                    run=series.run,
                    dataset=dataset.profile,
                    flags=cfg.flags(),
                    scores=scores,
                )
            )
            key = (
                f"{series.participant}_r{series.run}_obj{series.object_id:02d}"
                f"_{cfg.flag_label()}"
            )
            traces[key] = [
                {
                    "header": True,
                    "run_id": dataset.run_id,
                    "participant": series.participant,
                    "run": series.run,
                    "object_id": series.object_id,
                    "flags": cfg.flag_label(),
                    "seed": cfg.seed,
                    "gate_expected": gate.expected_size,
                    "gate_alpha": gate.alpha,
                }
            ] + series_traces
    results.sort(key=lambda r: (r.participant, r.run, r.les, r.kf, r.dar))
    return results, traces


def isolation_grid(base: PipelineConfig) -> list[PipelineConfig]:
    return [
        replace(base, enable_les=les, enable_kf=kf, enable_dar=dar)
        for les, kf, dar in [
            (False, False, False),
            (True, False, False),
            (False, True, False),
            (False, False, True),
        ]
    ]


def combination_grid(base: PipelineConfig) -> list[PipelineConfig]:
    return [
        replace(base, enable_les=les, enable_kf=kf, enable_dar=dar)
        for les, kf, dar in [
            (False, False, True),
            (True, True, False),
            (True, False, True),
            (False, True, True),
            (True, True, True),
        ]
    ]


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


def trace_dump(traces: list[dict]) -> str:
    """Structured per-frame log, one JSON object per line."""
    return "\n".join(json.dumps(t, sort_keys=True) for t in traces) + "\n"


def trace_load(text: str) -> list[dict]:
    return [json.loads(ln) for ln in text.splitlines() if ln.strip()]


def replay_frame(
    record: dict,
    header: dict,
    dataset: Dataset,
    cfg: PipelineConfig,
    seg: SegmentationProvider,
    depth: DepthProvider | None,
) -> Mask:
    """Re-run one dumped frame standalone; bit-exact against the run."""
    gate = SizeGate(expected_size=header["gate_expected"], alpha=header["gate_alpha"])
    kstate = UNINITIALIZED
    if "kf_state" in record:
        kstate = KalmanState(
            state=np.asarray(record["kf_state"]),
            covariance=np.asarray(record["kf_cov"]),
        )
    held = record.get("held_prompt")
    state = PromptState(
        object_id=header["object_id"],
        prompt=None if held is None else (held[0], held[1]),
        kalman=kstate,
    )
    gaze = record.get("gaze")
    frame = dataset.frame_ref(record["frame"])
    _, mask, _ = process_frame(
        state,
        None if gaze is None else (gaze[0], gaze[1]),
        frame,
        seg,
        depth,
        gate,
        replace(cfg, seed=header["seed"]),
    )
    return mask
