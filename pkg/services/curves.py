# services/curves.py
"""
Sampled curves in R^4: Legendrian lift, period, Lagrangian angle and Maslov winding.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple
import logging

import numpy as np
from scipy.integrate import cumulative_simpson

from config.settings import settings
from services.ambient import omega, eta, to_complex
from services.exceptions import (
    BranchTrackingError,
    DomainError,
    NonLagrangianError,
    NotClosedCurveError,
)
from services.numerics import first_derivative, second_derivative

logger = logging.getLogger(__name__)


@dataclass
class SampledCurve:
    """
    Curve samples s_0..s_N with points in R^4.

    Closed curves repeat the first point as the last sample, so
    points[-1] equals points[0] within CLOSURE_TOL.
    """
    s: np.ndarray
    points: np.ndarray
    closed: bool = False
    velocity: Optional[np.ndarray] = None
    acceleration: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    unit_speed: bool = False
    closure_tol: float = field(default=settings.CLOSURE_TOL, repr=False)

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 4 or self.points.shape[0] != self.s.shape[0]:
            raise DomainError(f"Curve samples must be (N, 4) matching s, got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise DomainError("Curve samples must be finite")
        if self.closed:
            gap = float(np.max(np.abs(self.points[-1] - self.points[0])))
            if gap > self.closure_tol:
                raise NotClosedCurveError(f"Curve declared closed but endpoints differ by {gap:.3e}")

    @property
    def n_samples(self) -> int:
        return self.s.shape[0]

    @property
    def spacing(self) -> float:
        return float(self.s[1] - self.s[0])

    def tangent(self) -> np.ndarray:
        if self.velocity is not None:
            return np.asarray(self.velocity, dtype=float)
        return self._differentiate(first_derivative)

    def second_tangent(self) -> np.ndarray:
        if self.acceleration is not None:
            return np.asarray(self.acceleration, dtype=float)
        return self._differentiate(second_derivative)

    def _differentiate(self, operator) -> np.ndarray:
        if self.closed:
            inner = operator(self.points[:-1], self.spacing, axis=0, periodic=True)
            return np.concatenate([inner, inner[:1]], axis=0)
        return operator(self.points, self.spacing, axis=0)

    def reversed(self) -> "SampledCurve":
        flip = lambda arr: None if arr is None else np.asarray(arr)[::-1].copy()
        velocity = flip(self.velocity)
        return SampledCurve(
            s=self.s[-1] - self.s[::-1],
            points=self.points[::-1].copy(),
            closed=self.closed,
            velocity=None if velocity is None else -velocity,
            acceleration=flip(self.acceleration),
            unit_speed=self.unit_speed,
            closure_tol=self.closure_tol,
        )

    def speed_defect(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.tangent(), axis=-1) - 1.0)))


@dataclass
class WindingResult:
    winding: int
    raw: float
    gap: float


def lift(curve: SampledCurve) -> np.ndarray:
    """phi(s) = integral of gamma^* eta from s_0 by composite Simpson."""
    if curve.n_samples < 8:
        raise DomainError(f"Lift needs at least 8 samples, got {curve.n_samples}")
    integrand = eta(curve.points, curve.tangent())
    return cumulative_simpson(integrand, x=curve.s, initial=0.0)


def lift_and_period(curve: SampledCurve, tolerance: float = 1e-10) -> Tuple[np.ndarray, float, bool]:
    """
    Legendrian lift values and the period of a closed curve.

    Args:
        curve: closed sampled curve
        tolerance: |period| threshold under which the curve is reported exact

    Returns:
        (phi samples, period, exact flag)
    """
    if not curve.closed:
        raise NotClosedCurveError("The period is only defined for closed curves")
    phi = lift(curve)
    period = float(phi[-1] - phi[0])
    return phi, period, abs(period) <= tolerance


def frame_lagrangian_angle(frames: np.ndarray, tolerance: float = settings.LAGRANGIAN_TOL) -> np.ndarray:
    """
    Continuous branch of arg det of Lagrangian 2-frames.

    Args:
        frames: (N, 4, 2) array; the two columns span the tangent planes

    Returns:
        beta samples on a continuous branch
    """
    frames = np.asarray(frames, dtype=float)
    t1, t2 = frames[..., 0], frames[..., 1]
    norms = np.linalg.norm(t1, axis=-1) * np.linalg.norm(t2, axis=-1)
    leak = float(np.max(np.abs(omega(t1, t2)) / norms))
    if leak > tolerance:
        raise NonLagrangianError(f"Frame is not Lagrangian: max |omega(t1, t2)| / |t1||t2| = {leak:.3e}")
    z1, z2 = to_complex(t1), to_complex(t2)
    det = z1[..., 0] * z2[..., 1] - z1[..., 1] * z2[..., 0]
    return track_branch(np.angle(det))


def track_branch(raw_angle: np.ndarray) -> np.ndarray:
    steps = np.diff(raw_angle)
    wrapped = (steps + np.pi) % (2.0 * np.pi) - np.pi
    worst = float(np.max(np.abs(wrapped))) if wrapped.size else 0.0
    if worst > settings.BRANCH_JUMP_LIMIT:
        raise BranchTrackingError(f"Lagrangian angle jumps by {worst:.3f} between samples; refine the sampling")
    return np.unwrap(raw_angle)


def curve_lagrangian_angle(curve: SampledCurve) -> np.ndarray:
    """Angle of the cone over a Legendrian curve in S^3: frame (gamma, gamma')."""
    frames = np.stack([curve.points, curve.tangent()], axis=-1)
    return frame_lagrangian_angle(frames)


def maslov_winding(beta: np.ndarray) -> WindingResult:
    raw = float(beta[-1] - beta[0]) / (2.0 * np.pi)
    winding = int(np.rint(raw))
    return WindingResult(winding=winding, raw=raw, gap=abs(raw - winding))
