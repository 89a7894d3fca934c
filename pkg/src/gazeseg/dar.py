"""Depth-aware refinement: suppressed depth maxima and nearest-peak
prompt relocation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .rasters import DepthMap, Point

# dataset profiles: (n_maxima, exclusion radius)
PROFILE_RATS = (8, 200.0)
PROFILE_MICE = (22, 125.0)


@dataclass(frozen=True)
class DarParams:
    n_maxima: int
    radius: float

    def __post_init__(self):
        if self.n_maxima < 1:
            raise ConfigError(f"n_maxima must be >= 1, got {self.n_maxima}")
        if self.radius <= 0:
            raise ConfigError(f"radius must be positive, got {self.radius}")

    @classmethod
    def for_profile(cls, profile: str) -> "DarParams":
        try:
            n, r = {"rats": PROFILE_RATS, "mice": PROFILE_MICE}[profile]
        except KeyError:
            raise ConfigError(f"unknown dataset profile {profile!r}") from None
        return cls(n_maxima=n, radius=r)


@dataclass(frozen=True)
class MaximaSet:
    """Depth maxima in extraction order: depths non-increasing, pairwise
    separation greater than the exclusion radius."""

    points: tuple[tuple[Point, float], ...]

    def __len__(self) -> int:
        return len(self.points)


def extract_maxima(d: DepthMap, params: DarParams) -> MaximaSet:
    """Iteratively pick the global depth argmax and suppress a closed
    disk of the exclusion radius around it.

    Argmax ties break to the lowest row-major index. Stops early once
    every pixel is suppressed.
    """
    work = d.values.astype(np.float64).copy()
    h, w = work.shape
    r = params.radius
    ri = int(np.floor(r))
    picked: list[tuple[Point, float]] = []
    for _ in range(params.n_maxima):
        flat = int(np.argmax(work))
        py, px = divmod(flat, w)
        peak = work[py, px]
        if peak == -np.inf:
            break
        picked.append(((float(px), float(py)), float(d.values[py, px])))
        y0, y1 = max(0, py - ri), min(h, py + ri + 1)
        x0, x1 = max(0, px - ri), min(w, px + ri + 1)
        yy, xx = np.ogrid[y0:y1, x0:x1]
        disk = (xx - px) ** 2 + (yy - py) ** 2 <= r * r
        work[y0:y1, x0:x1][disk] = -np.inf
    return MaximaSet(points=tuple(picked))


def dar_refine(prompt: Point, maxima: MaximaSet) -> Point:
    """Relocate the prompt to the nearest maximum; distance ties go to
    the earlier-extracted peak."""
    if not maxima.points:
        raise DataError("empty maxima set")
    pts = np.asarray([m for m, _ in maxima.points], dtype=float)
    d2 = ((pts - np.asarray(prompt, dtype=float)) ** 2).sum(axis=1)
    best = int(np.argmin(d2))  # first occurrence wins on ties
    return maxima.points[best][0]
