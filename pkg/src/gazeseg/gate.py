"""Mask-size validity window around the expected foreground area."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, DataError
from .rasters import Mask

DEFAULT_ALPHA = 0.5


@dataclass(frozen=True)
class SizeGate:
    """Validity window [s_min, s_max] = expected * (1 -/+ alpha)."""

    expected_size: float
    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.expected_size <= 0:
            raise DataError(f"expected size must be positive, got {self.expected_size}")

    @property
    def s_min(self) -> float:
        return self.expected_size * (1.0 - self.alpha)

    @property
    def s_max(self) -> float:
        return self.expected_size * (1.0 + self.alpha)

    def is_valid(self, s: float) -> bool:
        """Inclusive interval test on a mask size."""
        return self.s_min <= s <= self.s_max

    def is_valid_mask(self, m: Mask) -> bool:
        return self.is_valid(m.size())


def calibrate_gate(first_frame_gt: list[Mask], alpha: float = DEFAULT_ALPHA) -> SizeGate:
    """Gate from the mean size of the first-frame ground-truth masks."""
    if not first_frame_gt:
        raise DataError("no calibration masks")
    sizes = [m.size() for m in first_frame_gt]
    mean = sum(sizes) / len(sizes)
    if mean <= 0:
        raise DataError("all calibration masks are empty")
    return SizeGate(expected_size=mean, alpha=alpha)
