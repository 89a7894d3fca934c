"""Model backends: point-prompted segmentation and monocular depth.

The ``test`` backend is self-contained (threshold + connected component,
blur-based pseudo-depth) so the protocol path is exercisable without GPU
weights. The real-model backends lazily import their frameworks and
surface load failures as BackendError, which the server turns into ERR
replies instead of crashing.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage


class BackendError(RuntimeError):
    pass


class Backend:
    """segment() returns a bool (h, w) mask; depth() a float32 (h, w)
    raster in near-high orientation (larger = closer)."""

    def segment(self, image: np.ndarray, x: float, y: float) -> np.ndarray:
        raise NotImplementedError

    def depth(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class StubBackend(Backend):
    """Deterministic stand-in for real models on synthetic frames.

    Segmentation: binarize at the threshold and take the 4-connected
    component containing the prompt (foreground or background alike).
    Depth: smoothed normalized intensity on a unit floor, so bright
    objects read as near.
    """

    _structure = ndimage.generate_binary_structure(2, 1)

    def __init__(self, threshold: int = 128):
        self.threshold = threshold

    def segment(self, image: np.ndarray, x: float, y: float) -> np.ndarray:
        h, w = image.shape
        px = int(math.floor(x + 0.5))
        py = int(math.floor(y + 0.5))
        if not (0 <= px < w and 0 <= py < h):
            raise BackendError(f"prompt ({x}, {y}) outside {w}x{h} image")
        fg = image >= self.threshold
        same = fg if fg[py, px] else ~fg
        comps, _ = ndimage.label(same, structure=self._structure)
        return comps == comps[py, px]

    def depth(self, image: np.ndarray) -> np.ndarray:
        smooth = ndimage.gaussian_filter(image.astype(np.float32), sigma=2.0)
        return (1.0 + smooth / 255.0).astype(np.float32)


class EfficientSamBackend(Backend):
    """Point-prompted zero-shot segmentation via EfficientSAM weights."""

    def __init__(self, model_id: str, device: str, threshold: float | None):
        try:
            import torch  # noqa: F401
            from efficient_sam.build_efficient_sam import (  # type: ignore
                build_efficient_sam_vits,
                build_efficient_sam_vitt,
            )
        except ImportError as exc:
            raise BackendError(f"cannot load {model_id}: {exc}") from exc
        import torch

        build = build_efficient_sam_vitt if "ti" in model_id or "vitt" in model_id \
            else build_efficient_sam_vits
        self.device = device
        self.threshold = 0.0 if threshold is None else threshold
        try:
            self.model = build().to(device).eval()
        except Exception as exc:  # weight download / device failures
            raise BackendError(f"cannot load {model_id}: {exc}") from exc
        self.torch = torch

    def segment(self, image: np.ndarray, x: float, y: float) -> np.ndarray:
        torch = self.torch
        rgb = np.stack([image] * 3, axis=-1).astype(np.float32) / 255.0
        img_t = torch.from_numpy(rgb).permute(2, 0, 1)[None].to(self.device)
        pts = torch.tensor([[[[x, y]]]], dtype=torch.float32, device=self.device)
        lbl = torch.ones((1, 1, 1), device=self.device)
        with torch.no_grad():
            logits, _ = self.model(img_t, pts, lbl)
        return (logits[0, 0, 0].cpu().numpy() > self.threshold)


class DepthAnythingBackend(Backend):
    """Monocular depth via Depth-Anything v2; output is near-high."""

    def __init__(self, model_id: str, device: str):
        try:
            import torch  # noqa: F401
            from transformers import pipeline  # type: ignore
        except ImportError as exc:
            raise BackendError(f"cannot load {model_id}: {exc}") from exc
        from transformers import pipeline

        try:
            self.pipe = pipeline("depth-estimation", model=model_id, device=device)
        except Exception as exc:
            raise BackendError(f"cannot load {model_id}: {exc}") from exc

    def segment(self, image, x, y):
        raise BackendError("depth backend has no segmenter")

    def depth(self, image: np.ndarray) -> np.ndarray:
        from PIL import Image

        rgb = Image.fromarray(np.stack([image] * 3, axis=-1))
        out = self.pipe(rgb)
        return np.asarray(out["predicted_depth"], dtype=np.float32)
