"""Constant-velocity Kalman filter over the prompt position.

State is [x, y, vx, vy] with a one-frame time step. The filter predicts
a replacement prompt when segmentation fails and is corrected only by
gate-valid observations, so unreliable masks never pollute the track.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DataError
from .gate import SizeGate
from .les import RefineOutcome, SegmentFn
from .rasters import Mask, Point

DEFAULT_Q_SCALE = 1e-2
DEFAULT_R_SCALE = 1e-1
DEFAULT_INITIAL_VAR = 1.0

# dt = 1 frame
_F = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)
_H = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
    ]
)


def _default_f() -> np.ndarray:
    return _F.copy()


def _default_h() -> np.ndarray:
    return _H.copy()


def _default_q() -> np.ndarray:
    return DEFAULT_Q_SCALE * np.eye(4)


def _default_r() -> np.ndarray:
    return DEFAULT_R_SCALE * np.eye(2)


@dataclass(frozen=True)
class KalmanConfig:
    f: np.ndarray = field(default_factory=_default_f)
    h: np.ndarray = field(default_factory=_default_h)
    q: np.ndarray = field(default_factory=_default_q)
    r_obs: np.ndarray = field(default_factory=_default_r)

    @classmethod
    def from_scales(
        cls, q_scale: float = DEFAULT_Q_SCALE, r_scale: float = DEFAULT_R_SCALE
    ) -> "KalmanConfig":
        return cls(q=q_scale * np.eye(4), r_obs=r_scale * np.eye(2))


@dataclass(frozen=True)
class KalmanState:
    state: np.ndarray  # (4,) [x, y, vx, vy]
    covariance: np.ndarray  # (4, 4)
    initialized: bool = True

    def __post_init__(self):
        p = np.asarray(self.covariance, dtype=float)
        if np.abs(p - p.T).max() > 1e-9:
            raise DataError("covariance not symmetric")
        if (np.diag(p) < 0).any():
            raise DataError("covariance has negative diagonal")

    @property
    def position(self) -> Point:
        return (float(self.state[0]), float(self.state[1]))


UNINITIALIZED = KalmanState(
    state=np.zeros(4), covariance=np.zeros((4, 4)), initialized=False
)


def kf_init(p: Point, initial_var: float = DEFAULT_INITIAL_VAR) -> KalmanState:
    """Start a track at p with zero velocity and isotropic covariance."""
    if not (math.isfinite(p[0]) and math.isfinite(p[1])):
        raise DataError(f"non-finite initial position {p}")
    return KalmanState(
        state=np.array([p[0], p[1], 0.0, 0.0]),
        covariance=initial_var * np.eye(4),
    )


def kf_predict(st: KalmanState, cfg: KalmanConfig) -> tuple[KalmanState, Point]:
    """Time update; returns the predicted state and the predicted prompt H @ x."""
    if not st.initialized:
        raise DataError("predict on uninitialized filter")
    x = cfg.f @ st.state
    p = cfg.f @ st.covariance @ cfg.f.T + cfg.q
    p = 0.5 * (p + p.T)
    z = cfg.h @ x
    return KalmanState(state=x, covariance=p), (float(z[0]), float(z[1]))


def kf_correct(st: KalmanState, z: Point, cfg: KalmanConfig) -> KalmanState:
    """Measurement update with the observed prompt z."""
    if not st.initialized:
        raise DataError("correct on uninitialized filter")
    zv = np.array([z[0], z[1]], dtype=float)
    s = cfg.h @ st.covariance @ cfg.h.T + cfg.r_obs
    try:
        k = np.linalg.solve(s.T, (st.covariance @ cfg.h.T).T).T
    except np.linalg.LinAlgError as exc:
        raise DataError("singular innovation covariance") from exc
    x = st.state + k @ (zv - cfg.h @ st.state)
    p = (np.eye(4) - k @ cfg.h) @ st.covariance
    p = 0.5 * (p + p.T)
    return KalmanState(state=x, covariance=p)


def kf_step(
    st: KalmanState,
    raw_prompt: Point,
    raw_mask: Mask,
    gate: SizeGate,
    segment: SegmentFn,
    cfg: KalmanConfig,
    initial_var: float = DEFAULT_INITIAL_VAR,
) -> tuple[KalmanState, RefineOutcome]:
    """One tracking step.

    Valid raw mask: predict, then correct with the observed prompt;
    the raw result stands. Invalid raw mask: segment at the predicted
    prompt and adopt that mask if it passes the gate, advancing the
    state without a correction; if the prediction also fails the gate,
    the prediction is discarded and the state held (no covariance
    inflation during failure bursts).
    """
    raw_valid = gate.is_valid_mask(raw_mask)

    if not st.initialized:
        if raw_valid:
            return kf_init(raw_prompt, initial_var), RefineOutcome(
                prompt=raw_prompt, mask=raw_mask, accepted=True
            )
        return st, RefineOutcome(prompt=raw_prompt, mask=raw_mask, accepted=False)

    predicted, kf_prompt = kf_predict(st, cfg)
    if raw_valid:
        corrected = kf_correct(predicted, raw_prompt, cfg)
        return corrected, RefineOutcome(prompt=raw_prompt, mask=raw_mask, accepted=True)

    kf_mask = segment(kf_prompt)
    if gate.is_valid_mask(kf_mask):
        return predicted, RefineOutcome(prompt=kf_prompt, mask=kf_mask, accepted=True)
    return st, RefineOutcome(prompt=raw_prompt, mask=raw_mask, accepted=False)
