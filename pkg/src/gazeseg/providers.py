"""Segmentation and depth backends behind uniform contracts.

Three flavors: in-process label-map oracle, file-backed depth, and an
external child process speaking a newline-delimited wire protocol.
Every returned raster is checked against the frame resolution at this
boundary.
"""

from __future__ import annotations

import os
import selectors
import subprocess
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import netpbm
from .errors import DataError, ProviderError
from .rasters import DepthMap, LabelMap, Mask, Point, round_half_up

DEFAULT_EXEC_TIMEOUT_S = 30.0


@dataclass(frozen=True)
class FrameRef:
    """One frame of a run: where it lives and how big it is."""

    run_id: str
    frame_index: int
    resolution: tuple[int, int]  # (width, height)
    data_dir: Path

    def path(self, pattern: str) -> Path:
        return self.data_dir / (pattern % self.frame_index)

    @property
    def frame_path(self) -> Path:
        return self.path(netpbm.FRAME_PATTERN)


class SegmentationProvider:
    """Contract: segment(frame, p) -> Mask at frame resolution."""

    deterministic = True
    concurrent_safe = True

    def segment(self, frame: FrameRef, p: Point) -> Mask:
        raise NotImplementedError


class DepthProvider:
    """Contract: depth(frame) -> DepthMap at frame resolution, near-high."""

    deterministic = True
    concurrent_safe = True

    def depth(self, frame: FrameRef) -> DepthMap:
        raise NotImplementedError


def _check_resolution(raster, frame: FrameRef, what: str):
    if (raster.width, raster.height) != frame.resolution:
        raise ProviderError(
            f"{what} resolution {raster.width}x{raster.height} does not match "
            f"frame {frame.resolution[0]}x{frame.resolution[1]}"
        )
    return raster


class LabelMapProvider(SegmentationProvider):
    """Oracle segmenter: the 4-connected component of the instance id at
    the rounded prompt, from per-frame label-map files."""

    def __init__(self, data_dir: str | os.PathLike, connectivity: int = 4):
        self.data_dir = Path(data_dir)
        self.structure = ndimage.generate_binary_structure(
            2, 1 if connectivity == 4 else 2
        )
        self._load = lru_cache(maxsize=4)(self._read)
        # (path, instance id) -> component labeling of that id's support
        self._value_comps = lru_cache(maxsize=16)(self._label_value)

    def _read(self, path: str) -> LabelMap:
        try:
            return netpbm.read_label_map(Path(path).read_bytes())
        except FileNotFoundError as exc:
            raise ProviderError(f"missing label map {path}") from exc

    def _label_value(self, path: str, value: int) -> np.ndarray:
        lm = self._load(path)
        comps, _ = ndimage.label(lm.labels == value, structure=self.structure)
        return comps

    def segment(self, frame: FrameRef, p: Point) -> Mask:
        path = str(frame.path(netpbm.LABELS_PATTERN))
        lm = self._load(path)
        x, y = round_half_up(p[0]), round_half_up(p[1])
        if not (0 <= x < lm.width and 0 <= y < lm.height):
            raise ProviderError(
                f"prompt ({p[0]}, {p[1]}) outside {lm.width}x{lm.height} frame"
            )
        comps = self._value_comps(path, int(lm.labels[y, x]))
        mask = Mask(comps == comps[y, x])
        return _check_resolution(mask, frame, "mask")


class FileDepthProvider(DepthProvider):
    """Depth maps from per-frame PFM files; flip negates values for
    sources with a near-low convention."""

    def __init__(self, data_dir: str | os.PathLike, flip: bool = False):
        self.data_dir = Path(data_dir)
        self.flip = flip
        self._load = lru_cache(maxsize=4)(self._read)

    def _read(self, path: str) -> DepthMap:
        try:
            d = netpbm.read_pfm(Path(path).read_bytes())
        except FileNotFoundError as exc:
            raise ProviderError(f"missing depth map {path}") from exc
        except DataError as exc:
            raise ProviderError(f"corrupt depth map {path}: {exc}") from exc
        if self.flip:
            d = DepthMap(-d.values)
        return d

    def depth(self, frame: FrameRef) -> DepthMap:
        d = self._load(str(frame.path(netpbm.DEPTH_PATTERN)))
        return _check_resolution(d, frame, "depth map")


class ExecProtocolError(ProviderError):
    """Malformed response from the child process."""


class ExecTimeout(ProviderError):
    """Child did not answer within the deadline."""


class ExecChildExited(ProviderError):
    """Child process terminated mid-conversation."""


class ExecProvider(SegmentationProvider, DepthProvider):
    """External-process backend speaking the line-framed protocol.

    Requests on the child's stdin:
        ``SEG <request_id> <frame_path> <x> <y>``
        ``DEPTH <request_id> <frame_path>``
    Responses on its stdout:
        ``OK <request_id> <byte_len>`` + byte_len bytes (P5 PGM mask or
        Pf PFM depth), or ``ERR <request_id> <message>``.

    Requests are serialized per child; request ids increase strictly.
    """

    concurrent_safe = False

    def __init__(self, cmd: list[str], timeout_s: float = DEFAULT_EXEC_TIMEOUT_S):
        self.cmd = list(cmd)
        self.timeout_s = timeout_s
        self._proc: subprocess.Popen | None = None
        self._next_id = 1
        self._buf = b""

    def _ensure_child(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._buf = b""
            try:
                self._proc = subprocess.Popen(
                    self.cmd,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    bufsize=0,
                )
            except OSError as exc:
                raise ProviderError(f"cannot launch provider {self.cmd!r}: {exc}") from exc
        return self._proc

    def close(self):
        if self._proc is not None:
            if self._proc.poll() is None:
                self._proc.stdin.close()
                try:
                    self._proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
                    self._proc.wait()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _read_more(self, proc: subprocess.Popen, deadline: float):
        import time

        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise ExecTimeout(f"provider response exceeded {self.timeout_s}s")
        sel = selectors.DefaultSelector()
        sel.register(proc.stdout, selectors.EVENT_READ)
        ready = sel.select(timeout=remaining)
        sel.close()
        if not ready:
            raise ExecTimeout(f"provider response exceeded {self.timeout_s}s")
        chunk = os.read(proc.stdout.fileno(), 65536)
        if not chunk:
            code = proc.poll()
            raise ExecChildExited(f"provider closed its stream (exit code {code})")
        self._buf += chunk

    def _read_line(self, proc: subprocess.Popen, deadline: float) -> str:
        while b"\n" not in self._buf:
            self._read_more(proc, deadline)
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("ascii", errors="replace")

    def _read_exact(self, proc: subprocess.Popen, n: int, deadline: float) -> bytes:
        while len(self._buf) < n:
            try:
                self._read_more(proc, deadline)
            except ExecChildExited as exc:
                raise ExecProtocolError(
                    f"truncated response: expected {n} bytes, got {len(self._buf)} ({exc})"
                ) from exc
        payload, self._buf = self._buf[:n], self._buf[n:]
        return payload

    def _request(self, verb: str, args: list[str]) -> bytes:
        import time

        proc = self._ensure_child()
        req_id = self._next_id
        self._next_id += 1
        line = " ".join([verb, str(req_id), *args]) + "\n"
        try:
            proc.stdin.write(line.encode("ascii"))
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ExecChildExited(f"provider stdin closed: {exc}") from exc

        deadline = time.monotonic() + self.timeout_s
        reply = self._read_line(proc, deadline).split(" ", 2)
        if len(reply) < 2:
            raise ExecProtocolError(f"malformed response line {reply!r}")
        status, got_id = reply[0], reply[1]
        if got_id != str(req_id):
            raise ExecProtocolError(f"response id {got_id} does not match request {req_id}")
        if status == "ERR":
            msg = reply[2] if len(reply) > 2 else "unspecified"
            raise ProviderError(f"provider error: {msg}")
        if status != "OK" or len(reply) != 3:
            raise ExecProtocolError(f"malformed response line {reply!r}")
        try:
            byte_len = int(reply[2])
        except ValueError as exc:
            raise ExecProtocolError(f"bad byte length {reply[2]!r}") from exc
        return self._read_exact(proc, byte_len, deadline)

    def segment(self, frame: FrameRef, p: Point) -> Mask:
        payload = self._request(
            "SEG", [str(frame.frame_path), f"{p[0]:.3f}", f"{p[1]:.3f}"]
        )
        try:
            mask = netpbm.read_mask(payload)
        except DataError as exc:
            raise ExecProtocolError(f"undecodable mask payload: {exc}") from exc
        return _check_resolution(mask, frame, "mask")

    def depth(self, frame: FrameRef) -> DepthMap:
        payload = self._request("DEPTH", [str(frame.frame_path)])
        try:
            d = netpbm.read_pfm(payload)
        except DataError as exc:
            raise ExecProtocolError(f"undecodable depth payload: {exc}") from exc
        return _check_resolution(d, frame, "depth map")
