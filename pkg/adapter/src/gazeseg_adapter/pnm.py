"""Minimal PGM / PFM codecs for the wire protocol payloads.

PGM: binary P5, maxval 255. PFM: grayscale Pf, scale -1.0
(little-endian), rows stored bottom-up per the format; arrays here are
top-down, converted at this boundary.
"""

from __future__ import annotations

import numpy as np


class PnmError(ValueError):
    pass


def _parse_header(data: bytes, magic: bytes, n_fields: int) -> tuple[list[bytes], int]:
    if not data.startswith(magic):
        raise PnmError(f"bad magic {data[:2]!r}")
    pos = len(magic)
    fields: list[bytes] = []
    while len(fields) < n_fields:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            if eol < 0:
                raise PnmError("unterminated comment")
            pos = eol + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PnmError("truncated header")
        fields.append(data[start:pos])
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise PnmError("missing whitespace after header")
    return fields, pos + 1


def read_pgm(data: bytes) -> np.ndarray:
    (w, h, maxval), offset = _parse_header(data, b"P5", 3)
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise PnmError(f"unsupported maxval {maxval}")
    need = w * h
    payload = data[offset : offset + need]
    if len(payload) < need:
        raise PnmError("truncated payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def write_pfm(values: np.ndarray) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f4")
    h, w = values.shape
    return b"Pf\n%d %d\n-1.0\n" % (w, h) + values[::-1].tobytes()


def read_pfm(data: bytes) -> np.ndarray:
    (w, h, scale), offset = _parse_header(data, b"Pf", 3)
    w, h = int(w), int(h)
    if float(scale) >= 0:
        raise PnmError("big-endian PFM not supported")
    need = 4 * w * h
    payload = data[offset : offset + need]
    if len(payload) < need:
        raise PnmError("truncated payload")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w)[::-1].copy()
