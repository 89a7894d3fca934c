"""Overlap metrics and per-run aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import DataError
from .rasters import Mask, mask_and


def _intersection(a: Mask, b: Mask) -> int:
    if (a.height, a.width) != (b.height, b.width):
        # delegate the error message
        mask_and(a, b)
    return int(np.count_nonzero(a.bits & b.bits))


def jaccard(a: Mask, b: Mask) -> float:
    """Intersection over union of prediction a vs ground truth b."""
    if b.size() == 0:
        raise DataError("empty ground truth mask")
    inter = _intersection(a, b)
    return inter / (a.size() + b.size() - inter)


def dsc(a: Mask, b: Mask) -> float:
    """Dice coefficient 2|A∩B| / (|A| + |B|)."""
    if b.size() == 0:
        raise DataError("empty ground truth mask")
    return 2.0 * _intersection(a, b) / (a.size() + b.size())


@dataclass(frozen=True)
class FrameScore:
    frame_index: int
    j: float = 0.0
    dsc: float = 0.0
    valid: bool = True  # False: frame skipped (empty GT), excluded from means


def score_frame(pred: Mask, gt: Mask, frame_index: int) -> FrameScore:
    """Score one frame; empty ground truth marks the frame skipped
    rather than scoring 0 or 1."""
    if gt.size() == 0:
        return FrameScore(frame_index=frame_index, valid=False)
    return FrameScore(frame_index=frame_index, j=jaccard(pred, gt), dsc=dsc(pred, gt))


def aggregate(scores: list[FrameScore]) -> tuple[float, float]:
    """(mean J, mean DSC) over non-skipped frames, scaled 0-100."""
    kept = [s for s in scores if s.valid]
    if not kept:
        raise DataError("no scorable frames")
    mean_j = sum(s.j for s in kept) / len(kept)
    mean_dsc = sum(s.dsc for s in kept) / len(kept)
    return 100.0 * mean_j, 100.0 * mean_dsc


def relative_improvement(baseline: float, treated: float) -> float:
    """Percent change from baseline to treated, e.g. 38.8 -> 66.2 is 70.6."""
    if baseline <= 0:
        raise DataError(f"relative improvement undefined for baseline {baseline}")
    return round1((treated - baseline) / baseline * 100.0)


def round1(v: float) -> float:
    """Display rounding: 1 decimal, half up."""
    return float(Decimal(repr(v)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class RunResult:
    """Aggregated scores for one (participant, run, method combination)."""

    participant: str
    run: str
    dataset: str
    les: bool
    kf: bool
    dar: bool
    mean_j: float
    mean_dsc: float
    frames_scored: int
    frame_scores: tuple[FrameScore, ...] = field(default=(), compare=False)

    @property
    def flags(self) -> tuple[bool, bool, bool]:
        return (self.les, self.kf, self.dar)


def from_frame_scores(
    participant: str,
    run: str,
    dataset: str,
    flags: tuple[bool, bool, bool],
    scores: list[FrameScore],
) -> RunResult:
    mean_j, mean_dsc = aggregate(scores)
    return RunResult(
        participant=participant,
        run=run,
        dataset=dataset,
        les=flags[0],
        kf=flags[1],
        dar=flags[2],
        mean_j=mean_j,
        mean_dsc=mean_dsc,
        frames_scored=sum(1 for s in scores if s.valid),
        frame_scores=tuple(scores),
    )


def mean_over_runs(results: list[RunResult]) -> RunResult:
    """Mean of per-run aggregates sharing (participant, dataset, flags)."""
    if not results:
        raise DataError("no runs to average")
    first = results[0]
    key = (first.participant, first.dataset, first.flags)
    for r in results[1:]:
        if (r.participant, r.dataset, r.flags) != key:
            raise DataError("cannot average runs with differing identity or flags")
    return RunResult(
        participant=first.participant,
        run="mean",
        dataset=first.dataset,
        les=first.les,
        kf=first.kf,
        dar=first.dar,
        mean_j=sum(r.mean_j for r in results) / len(results),
        mean_dsc=sum(r.mean_dsc for r in results) / len(results),
        frames_scored=sum(r.frames_scored for r in results),
    )
