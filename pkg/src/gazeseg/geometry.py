"""Perspective mapping from scene-camera pixels to the canonical arena frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DetectionFailed
from .rasters import GrayImage, Point


@dataclass(frozen=True)
class Quad:
    """Convex quadrilateral, corners ordered TL, TR, BR, BL."""

    corners: tuple[Point, Point, Point, Point]

    def __post_init__(self):
        pts = np.asarray(self.corners, dtype=float)
        if pts.shape != (4, 2) or not np.isfinite(pts).all():
            raise DataError("quad needs 4 finite corners")
        # strict convexity: consistent sign of all corner cross products
        crosses = []
        for i in range(4):
            a, b, c = pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]
            u, v = b - a, c - b
            crosses.append(u[0] * v[1] - u[1] * v[0])
        if not (all(c > 1e-9 for c in crosses) or all(c < -1e-9 for c in crosses)):
            raise DataError("quad corners are not strictly convex")


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, normalized so h[2,2] == 1."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.shape != (3, 3) or not np.isfinite(h).all():
            raise DataError("homography must be a finite 3x3 matrix")
        if abs(h[2, 2]) < 1e-12:
            raise DataError("homography has vanishing scale entry")
        h = h / h[2, 2]
        if abs(np.linalg.det(h)) <= 1e-12:
            raise DataError("homography is singular")
        object.__setattr__(self, "h", h)
        h.setflags(write=False)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))


def estimate_homography(src: list[Point], dst: list[Point]) -> Homography:
    """Solve the direct linear 8x8 system mapping 4 src points to 4 dst points."""
    src_a = np.asarray(src, dtype=float)
    dst_a = np.asarray(dst, dtype=float)
    if src_a.shape != (4, 2) or dst_a.shape != (4, 2):
        raise DataError("exactly 4 point correspondences required")
    for pts, name in ((src_a, "src"), (dst_a, "dst")):
        if _has_collinear_triple(pts):
            raise DataError(f"degenerate correspondences: 3 collinear {name} points")

    # unknowns h00..h21 with h22 fixed at 1
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src_a, dst_a)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        b[2 * i] = u
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i + 1] = v
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DataError("degenerate correspondences") from exc
    h = np.append(sol, 1.0).reshape(3, 3)
    return Homography(h)


def _has_collinear_triple(pts: np.ndarray, tol: float = 1e-9) -> bool:
    for i in range(4):
        rest = np.delete(pts, i, axis=0)
        u, v = rest[1] - rest[0], rest[2] - rest[0]
        area2 = u[0] * v[1] - u[1] * v[0]
        if abs(area2) <= tol:
            return True
    return False


def apply_homography(h: Homography, p: Point) -> Point:
    v = h.h @ np.array([p[0], p[1], 1.0])
    if abs(v[2]) < 1e-12:
        raise DataError(f"point ({p[0]}, {p[1]}) maps to infinity")
    return (v[0] / v[2], v[1] / v[2])


def detect_arena_quad(img: GrayImage, edge_threshold: float, invert: bool = False) -> Quad:
    """Locate the bright rectangular arena via edge extremal corners.

    Central-difference gradient magnitude, binarized at edge_threshold;
    the four corners are the edge pixels extremizing x+y, x-y, -x-y,
    -x+y (TL, TR, BR, BL for an axis-aligned or mildly rotated arena).
    """
    f = img.intensity.astype(float)
    if invert:
        f = 255.0 - f
    gy, gx = np.gradient(f)
    mag = np.hypot(gx, gy)
    ys, xs = np.nonzero(mag >= edge_threshold)
    if len(xs) < 4:
        raise DetectionFailed(
            f"only {len(xs)} edge pixels at threshold {edge_threshold}"
        )
    s = xs + ys
    d = xs - ys
    tl = (float(xs[np.argmin(s)]), float(ys[np.argmin(s)]))
    br = (float(xs[np.argmax(s)]), float(ys[np.argmax(s)]))
    tr = (float(xs[np.argmax(d)]), float(ys[np.argmax(d)]))
    bl = (float(xs[np.argmin(d)]), float(ys[np.argmin(d)]))
    try:
        return Quad((tl, tr, br, bl))
    except DataError as exc:
        raise DetectionFailed(f"degenerate arena quad: {exc}") from exc


def arena_homography(quad: Quad, target_width: float, target_height: float) -> Homography:
    """Homography sending the detected quad onto the canonical rectangle."""
    dst = [
        (0.0, 0.0),
        (float(target_width), 0.0),
        (float(target_width), float(target_height)),
        (0.0, float(target_height)),
    ]
    return estimate_homography(list(quad.corners), dst)
