"""Local exploratory sampling: probe random nearby prompts until one
produces a gate-valid mask."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, ProviderError
from .gate import SizeGate
from .rasters import Mask, Point

SegmentFn = Callable[[Point], Mask]

DEFAULT_N_CANDIDATES = 20
RADIUS_RATS = 50.0
RADIUS_MICE = 25.0


@dataclass(frozen=True)
class LesParams:
    n_candidates: int = DEFAULT_N_CANDIDATES
    radius: float = RADIUS_RATS
    clamp_to_bounds: bool = True

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ConfigError(f"n_candidates must be >= 1, got {self.n_candidates}")
        if self.radius <= 0:
            raise ConfigError(f"radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class RefineOutcome:
    prompt: Point
    mask: Mask
    accepted: bool
    probes_used: int = 0


def les_refine(
    prompt: Point,
    initial_mask: Mask,
    gate: SizeGate,
    segment: SegmentFn,
    params: LesParams,
    rng: np.random.Generator,
) -> RefineOutcome:
    """Rescue an unreliable prompt by first-accept candidate probing.

    A valid initial mask short-circuits with zero provider calls.
    Otherwise candidates p + (dx, dy) with dx, dy ~ U(-r, r) are
    segmented in draw order and the first gate-valid mask wins; after
    n_candidates failures the original prompt and mask are kept.
    """
    if gate.is_valid_mask(initial_mask):
        return RefineOutcome(prompt=prompt, mask=initial_mask, accepted=True)

    w, h = initial_mask.width, initial_mask.height
    for i in range(params.n_candidates):
        dx, dy = rng.uniform(-params.radius, params.radius, size=2)
        cand = (prompt[0] + dx, prompt[1] + dy)
        if params.clamp_to_bounds:
            cand = (min(max(cand[0], 0.0), w - 1.0), min(max(cand[1], 0.0), h - 1.0))
        try:
            mask = segment(cand)
        except ProviderError as exc:
            raise ProviderError(f"probe {i + 1} failed: {exc}") from exc
        if gate.is_valid_mask(mask):
            return RefineOutcome(prompt=cand, mask=mask, accepted=True, probes_used=i + 1)
    return RefineOutcome(
        prompt=prompt, mask=initial_mask, accepted=False, probes_used=params.n_candidates
    )
