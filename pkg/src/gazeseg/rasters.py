"""In-memory raster containers and pixel-level operations.

All rasters are row-major with a top-left origin: x grows rightward,
y grows downward. Points are (x, y) tuples of floats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError

Point = tuple[float, float]

# 4-connectivity structuring element for component extraction.
_CROSS = ndimage.generate_binary_structure(2, 1)
_FULL = ndimage.generate_binary_structure(2, 2)


@dataclass(frozen=True)
class Mask:
    """Binary foreground raster."""

    bits: np.ndarray  # bool, shape (h, w)

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise DataError(f"mask must be a 2-D raster, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)
        bits.setflags(write=False)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def size(self) -> int:
        """Number of foreground pixels (computed once, then cached)."""
        cached = self.__dict__.get("_size")
        if cached is None:
            cached = int(self.bits.sum())
            object.__setattr__(self, "_size", cached)
        return cached


@dataclass(frozen=True)
class LabelMap:
    """Instance-id raster; 0 is reserved for background."""

    labels: np.ndarray  # uint8, shape (h, w)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.uint8)
        if labels.ndim != 2 or labels.shape[0] < 1 or labels.shape[1] < 1:
            raise DataError(f"label map must be a 2-D raster, got shape {labels.shape}")
        object.__setattr__(self, "labels", labels)
        labels.setflags(write=False)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def instance_mask(self, instance_id: int) -> Mask:
        return Mask(self.labels == instance_id)


@dataclass(frozen=True)
class DepthMap:
    """Relative depth raster; larger value means closer to the camera."""

    values: np.ndarray  # float32, shape (h, w)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"depth map must be a 2-D raster, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise DataError("depth map contains non-finite values")
        object.__setattr__(self, "values", values)
        values.setflags(write=False)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class GrayImage:
    """8-bit intensity raster."""

    intensity: np.ndarray  # uint8, shape (h, w)

    def __post_init__(self):
        intensity = np.asarray(self.intensity, dtype=np.uint8)
        if intensity.ndim != 2 or intensity.shape[0] < 1 or intensity.shape[1] < 1:
            raise DataError(f"image must be a 2-D raster, got shape {intensity.shape}")
        object.__setattr__(self, "intensity", intensity)
        intensity.setflags(write=False)

    @property
    def width(self) -> int:
        return self.intensity.shape[1]

    @property
    def height(self) -> int:
        return self.intensity.shape[0]


def mask_size(m: Mask) -> int:
    """Foreground pixel count of a mask."""
    return m.size()


def mask_and(a: Mask, b: Mask) -> Mask:
    _check_same_shape(a, b)
    return Mask(a.bits & b.bits)


def mask_or(a: Mask, b: Mask) -> Mask:
    _check_same_shape(a, b)
    return Mask(a.bits | b.bits)


def mask_ops(a: Mask, b: Mask) -> tuple[Mask, Mask]:
    """Pointwise (intersection, union) of two same-size masks."""
    return mask_and(a, b), mask_or(a, b)


def _check_same_shape(a, b) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise DataError(
            f"raster dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def round_half_up(v: float) -> int:
    """Round to nearest integer, halves away from zero toward +inf."""
    import math

    return int(math.floor(v + 0.5))


def connected_component(lm: LabelMap, p: Point, connectivity: int = 4) -> Mask:
    """Mask of the connected region sharing the instance id at p.

    Background (id 0) is segmentable too: a prompt that misses every
    object yields the big background component, which then fails any
    sensible size gate.
    """
    x = round_half_up(p[0])
    y = round_half_up(p[1])
    if not (0 <= x < lm.width and 0 <= y < lm.height):
        raise DataError(f"point ({p[0]}, {p[1]}) outside {lm.width}x{lm.height} raster")
    if connectivity not in (4, 8):
        raise DataError(f"unsupported connectivity {connectivity}")
    structure = _CROSS if connectivity == 4 else _FULL
    same = lm.labels == lm.labels[y, x]
    comps, _ = ndimage.label(same, structure=structure)
    return Mask(comps == comps[y, x])
