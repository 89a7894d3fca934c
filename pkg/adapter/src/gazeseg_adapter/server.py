"""Single-threaded request loop over stdin/stdout.

Requests:  ``SEG <id> <frame_path> <x> <y>`` / ``DEPTH <id> <frame_path>``
Responses: ``OK <id> <byte_len>\\n`` + payload (P5 PGM mask or Pf PFM
depth, frame resolution) or ``ERR <id> <message>\\n``.

Every failure becomes an ERR reply for that request; the loop itself
never dies on bad input, so a misbehaving request cannot take the
pipeline's provider down with it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from . import pnm
from .backends import Backend, BackendError, DepthAnythingBackend, EfficientSamBackend, StubBackend


@dataclass(frozen=True)
class AdapterConfig:
    backend: str = "test"  # "test" or "models"
    seg_model: str = "efficientsam-ti"
    depth_model: str = "depth-anything/Depth-Anything-V2-Small-hf"
    device: str = "cpu"
    mask_threshold: float | None = None  # None: model default
    depth_near_low: bool = False  # set when the depth model is near-low; output is flipped


class _Lazy:
    """Defer backend construction to first use; a load failure is
    remembered and re-reported per request."""

    def __init__(self, factory):
        self.factory = factory
        self.value: Backend | None = None
        self.error: str | None = None

    def get(self) -> Backend:
        if self.error is not None:
            raise BackendError(self.error)
        if self.value is None:
            try:
                self.value = self.factory()
            except BackendError as exc:
                self.error = str(exc)
                raise
        return self.value


def _make_backends(cfg: AdapterConfig) -> tuple[_Lazy, _Lazy]:
    if cfg.backend == "test":
        threshold = 128 if cfg.mask_threshold is None else int(cfg.mask_threshold)
        shared = StubBackend(threshold=threshold)
        return _Lazy(lambda: shared), _Lazy(lambda: shared)
    if cfg.backend == "models":
        seg = _Lazy(
            lambda: EfficientSamBackend(cfg.seg_model, cfg.device, cfg.mask_threshold)
        )
        depth = _Lazy(lambda: DepthAnythingBackend(cfg.depth_model, cfg.device))
        return seg, depth
    raise BackendError(f"unknown backend {cfg.backend!r}")


def _load_frame(path: str) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise BackendError(f"cannot read frame {path}: {exc}") from exc
    try:
        return pnm.read_pgm(data)
    except pnm.PnmError as exc:
        raise BackendError(f"bad frame {path}: {exc}") from exc


def serve(cfg: AdapterConfig, stdin: BinaryIO, stdout: BinaryIO) -> None:
    try:
        seg_backend, depth_backend = _make_backends(cfg)
    except BackendError as exc:
        err = str(exc)
        seg_backend = depth_backend = _Lazy(lambda: (_ for _ in ()).throw(BackendError(err)))

    for line in stdin:
        parts = line.decode("ascii", errors="replace").split()
        if not parts:
            continue
        req_id = parts[1] if len(parts) > 1 else "?"
        try:
            payload = _handle(parts, seg_backend, depth_backend, cfg)
        except BackendError as exc:
            _reply_err(stdout, req_id, str(exc))
            continue
        except Exception as exc:  # malformed numbers etc.: keep serving
            _reply_err(stdout, req_id, f"bad request: {exc}")
            continue
        stdout.write(b"OK %s %d\n" % (req_id.encode("ascii"), len(payload)))
        stdout.write(payload)
        stdout.flush()


def _handle(parts: list[str], seg: _Lazy, depth: _Lazy, cfg: AdapterConfig) -> bytes:
    verb = parts[0]
    if verb == "SEG":
        if len(parts) != 5:
            raise BackendError(f"SEG expects 4 arguments, got {len(parts) - 1}")
        image = _load_frame(parts[2])
        mask = seg.get().segment(image, float(parts[3]), float(parts[4]))
        return pnm.write_pgm(np.where(mask, 255, 0).astype(np.uint8))
    if verb == "DEPTH":
        if len(parts) != 3:
            raise BackendError(f"DEPTH expects 2 arguments, got {len(parts) - 1}")
        image = _load_frame(parts[2])
        values = depth.get().depth(image)
        if cfg.depth_near_low:
            values = -values  # normalize to the near-high contract
        if not np.isfinite(values).all():
            raise BackendError("model produced non-finite depth")
        return pnm.write_pfm(values)
    raise BackendError("unknown-verb")


def _reply_err(stdout: BinaryIO, req_id: str, message: str) -> None:
    message = " ".join(message.split()) or "unspecified"
    stdout.write(b"ERR %s %s\n" % (req_id.encode("ascii"), message.encode("ascii", "replace")))
    stdout.flush()
