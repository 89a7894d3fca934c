"""Byte-exact codecs for the on-disk raster formats.

PGM (P5, maxval 255) carries masks, label maps and grayscale frames.
PFM (Pf, scale -1.0, little-endian) carries depth maps; PFM stores rows
bottom-up, which is converted to our top-down convention at this
boundary. PPM (P6) is write-only, for overlay figures.
"""

from __future__ import annotations

import numpy as np

from .errors import CodecError
from .rasters import DepthMap, GrayImage, LabelMap, Mask

MASK_FOREGROUND = 255


def _parse_pnm_header(data: bytes, magic: bytes, n_fields: int) -> tuple[list[int], int]:
    """Parse `magic` + n_fields whitespace-separated integers.

    Returns the field values and the offset of the binary payload
    (one whitespace byte after the last header token). `#` comments
    are honored per the netpbm spec.
    """
    if not data.startswith(magic):
        raise CodecError(f"bad magic: expected {magic!r}, got {data[:2]!r}")
    pos = len(magic)
    fields: list[int] = []
    while len(fields) < n_fields:
        # skip whitespace and comments
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            if eol < 0:
                raise CodecError("unterminated comment in header")
            pos = eol + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token:
            raise CodecError("truncated header")
        try:
            fields.append(int(token))
        except ValueError as exc:
            raise CodecError(f"non-numeric header token {token!r}") from exc
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise CodecError("missing whitespace after header")
    return fields, pos + 1


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a binary PGM into a (h, w) uint8 array."""
    (width, height, maxval), offset = _parse_pnm_header(data, b"P5", 3)
    if width < 1 or height < 1:
        raise CodecError(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise CodecError(f"unsupported maxval {maxval} (only 255)")
    payload = data[offset : offset + width * height]
    if len(payload) < width * height:
        raise CodecError(
            f"truncated payload: need {width * height} bytes, have {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim != 2:
        raise CodecError(f"expected a 2-D raster, got shape {pixels.shape}")
    h, w = pixels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def read_mask(data: bytes) -> Mask:
    return Mask(read_pgm(data) > 0)


def write_mask(m: Mask) -> bytes:
    return write_pgm(np.where(m.bits, MASK_FOREGROUND, 0).astype(np.uint8))


def read_label_map(data: bytes) -> LabelMap:
    return LabelMap(read_pgm(data))


def write_label_map(lm: LabelMap) -> bytes:
    return write_pgm(lm.labels)


def read_gray(data: bytes) -> GrayImage:
    return GrayImage(read_pgm(data))


def write_gray(img: GrayImage) -> bytes:
    return write_pgm(img.intensity)


def read_pfm(data: bytes) -> DepthMap:
    """Decode a grayscale PFM into a DepthMap."""
    if data.startswith(b"PF"):
        raise CodecError("color PFM (PF) not supported, expected grayscale Pf")
    (width, height), offset = _parse_pnm_header(data, b"Pf", 2)
    # scale line is a float; parse it separately
    end = offset
    while end < len(data) and not data[end : end + 1].isspace():
        end += 1
    try:
        scale = float(data[offset:end])
    except ValueError as exc:
        raise CodecError("bad scale line") from exc
    if scale >= 0:
        raise CodecError(f"big-endian PFM (scale {scale}) not supported")
    offset = end + 1
    count = width * height
    payload = data[offset : offset + 4 * count]
    if len(payload) < 4 * count:
        raise CodecError(
            f"truncated payload: need {4 * count} bytes, have {len(payload)}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    if not np.isfinite(values).all():
        raise CodecError("non-finite values in PFM payload")
    # PFM rows run bottom-up
    return DepthMap(values[::-1].copy())


def write_pfm(d: DepthMap) -> bytes:
    header = b"Pf\n%d %d\n-1.0\n" % (d.width, d.height)
    return header + np.ascontiguousarray(d.values[::-1], dtype="<f4").tobytes()


def write_ppm(rgb: np.ndarray) -> bytes:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise CodecError(f"expected (h, w, 3) raster, got shape {rgb.shape}")
    h, w, _ = rgb.shape
    return b"P6\n%d %d\n255\n" % (w, h) + rgb.tobytes()


# Canonical on-disk names, %-keyed by frame index (and object id for GT).
FRAME_PATTERN = "frame_%06d.pgm"
LABELS_PATTERN = "labels_%06d.pgm"
DEPTH_PATTERN = "depth_%06d.pfm"
GT_PATTERN = "gt_%06d_obj%02d.pgm"
GAZE_PATTERN = "gaze_obj%02d.csv"
