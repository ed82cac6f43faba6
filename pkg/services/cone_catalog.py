# services/cone_catalog.py
"""
Cone Catalog Service
Hamiltonian-stationary Lagrangian cones over the (p, q) Legendrian torus links
in S^3, their k-fold covers and their closed-form geometry.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Tuple
import logging
import math

import numpy as np

from config.settings import settings
from models.cone import ConeSpec, ValidationReport
from services.ambient import apply_j, from_complex, metric, to_complex
from services.curves import SampledCurve, curve_lagrangian_angle, maslov_winding, track_branch
from services.exceptions import BranchTrackingError, DomainError, NotClosedCurveError
from services.immersion import SampledImmersion

logger = logging.getLogger(__name__)


@dataclass
class ConeLink:
    spec: ConeSpec
    curve: SampledCurve
    beta: np.ndarray


@dataclass
class ConeShape:
    H: np.ndarray
    JH: np.ndarray
    B11: np.ndarray
    B12: np.ndarray
    B22: np.ndarray
    area_density: float


def cone_curve(spec: ConeSpec, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Complex samples of the link, its velocity and acceleration.

    gamma(s) = (sqrt(q) e^{i w s}, i sqrt(p) e^{-i v s}) / sqrt(p + q),
    w = sqrt(p/q), v = sqrt(q/p).
    """
    s = np.asarray(s, dtype=float)
    p, q = spec.p, spec.q
    w, v = math.sqrt(p / q), math.sqrt(q / p)
    norm = 1.0 / math.sqrt(p + q)
    z1 = norm * math.sqrt(q) * np.exp(1j * w * s)
    z2 = 1j * norm * math.sqrt(p) * np.exp(-1j * v * s)
    gamma = np.stack([z1, z2], axis=-1)
    velocity = np.stack([1j * w * z1, -1j * v * z2], axis=-1)
    acceleration = np.stack([-w * w * z1, -v * v * z2], axis=-1)
    return gamma, velocity, acceleration


class ConeCatalogService:
    """Construction and validation of (p, q) cones"""

    def __init__(self, tolerance: float = settings.CONE_VALIDATION_TOL):
        self.tolerance = tolerance

    def make_cone(self, spec: ConeSpec, n_samples: int = settings.CONE_SAMPLES) -> ConeLink:
        """
        Sample the link of a (p, q) cone on [0, 2 pi k sqrt(pq)].

        Args:
            spec: validated cone specification
            n_samples: number of intervals (the closing sample is added)

        Returns:
            ConeLink with analytic velocity and acceleration
        """
        if n_samples < 16:
            raise DomainError(f"make_cone needs at least 16 samples, got {n_samples}")
        s = np.linspace(0.0, spec.length, n_samples + 1)
        gamma, velocity, acceleration = cone_curve(spec, s)
        points = from_complex(gamma)
        closure = float(np.max(np.abs(points[-1] - points[0])))
        if closure > settings.CLOSURE_TOL:
            raise NotClosedCurveError(f"Cone {spec.p, spec.q, spec.k} link fails to close: {closure:.3e}")
        curve = SampledCurve(
            s=s, points=points, closed=True,
            velocity=from_complex(velocity), acceleration=from_complex(acceleration), unit_speed=True,
        )
        beta = 2.0 * spec.a * s
        return ConeLink(spec=spec, curve=curve, beta=beta)

    def validate_cone(self, link: ConeLink) -> ValidationReport:
        """
        Report the defects of a sampled link against the cone equations.
        Defects above tolerance are reported, not raised.
        """
        spec, curve = link.spec, link.curve
        s = curve.s
        gamma = to_complex(curve.points)
        velocity = to_complex(curve.tangent())
        rotation = np.exp(2j * spec.a * s)

        unit_norm = np.max(np.abs(np.linalg.norm(curve.points, axis=-1) - 1.0))
        unit_speed = np.max(np.abs(np.linalg.norm(curve.tangent(), axis=-1) - 1.0))
        legendrian = np.max(np.abs(metric(apply_j(curve.points), curve.tangent())))
        system = np.maximum(
            np.abs(velocity[:, 0] + rotation * np.conj(gamma[:, 1])),
            np.abs(velocity[:, 1] - rotation * np.conj(gamma[:, 0])),
        ).max()
        angle_det = gamma[:, 0] * velocity[:, 1] - gamma[:, 1] * velocity[:, 0]
        angle_identity = np.max(np.abs(angle_det - rotation))
        closure = np.max(np.abs(curve.points[-1] - curve.points[0])) if curve.closed else math.inf

        try:
            beta = track_branch(np.angle(angle_det))
            slope = np.polyfit(s, beta, 1)[0]
            angle_slope = abs(slope - 2.0 * spec.a)
            single = s <= spec.period * (1.0 + 1e-12)
            winding = maslov_winding(beta[single]).winding
        except BranchTrackingError as e:
            logger.warning(f"Angle tracking failed during validation: {e}")
            angle_slope, winding = math.inf, 0

        report = ValidationReport(
            spec=spec, n_samples=curve.n_samples,
            unit_norm=float(unit_norm), unit_speed=float(unit_speed), legendrian=float(legendrian),
            first_order_system=float(system), angle_identity=float(angle_identity),
            closure=float(closure), angle_slope=float(angle_slope), maslov_winding=winding,
            tolerance=self.tolerance,
        )
        if not report.passed:
            logger.warning(f"Cone ({spec.p},{spec.q},{spec.k}) validation defect {report.max_defect:.3e}")
        return report

    def cone_maslov_index(self, spec: ConeSpec, n_samples: int = 64) -> int:
        """Winding of the numerically tracked angle over one traversal, refining on failure."""
        n = n_samples
        while n <= settings.MASLOV_MAX_SAMPLES:
            s = np.linspace(0.0, spec.period, n + 1)
            gamma, velocity, _ = cone_curve(spec, s)
            curve = SampledCurve(s=s, points=from_complex(gamma), velocity=from_complex(velocity))
            try:
                return maslov_winding(curve_lagrangian_angle(curve)).winding
            except BranchTrackingError:
                logger.warning(f"Branch tracking failed at N = {n}, doubling")
                n *= 2
        raise BranchTrackingError(f"Angle tracking did not stabilize below {settings.MASLOV_MAX_SAMPLES} samples")

    def cone_shape(self, spec: ConeSpec, r, s) -> ConeShape:
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0.0):
            raise DomainError("cone_shape is undefined at the vertex r <= 0")
        gamma, velocity, acceleration = (from_complex(z) for z in cone_curve(spec, s))
        H = (acceleration + gamma) / r[..., None]
        slope = (spec.q - spec.p) / math.sqrt(spec.p * spec.q)
        JH = slope * velocity / r[..., None]
        zero = np.zeros_like(H)
        return ConeShape(H=H, JH=JH, B11=zero, B12=zero.copy(), B22=H.copy(), area_density=r)

    def ball_area(self, spec: ConeSpec, R: float) -> float:
        """Area of the cone inside the ball of radius R: half the link length times R^2."""
        if R <= 0:
            raise DomainError("Ball radius must be positive")
        return 0.5 * spec.length * R * R

    def sigma_h_on_cone(self, spec: ConeSpec) -> float:
        """sigma_H(d/ds) on the cone; equals -d(beta)/ds = (q - p)/sqrt(pq)."""
        return (spec.q - spec.p) / math.sqrt(spec.p * spec.q)

    def cone_immersion(self, spec: ConeSpec, r: np.ndarray, s: np.ndarray, analytic: bool = True,
                       periodic: bool = False) -> SampledImmersion:
        """
        Sample l(r, s) = r gamma(s).

        Args:
            r, s: uniform axes; for periodic=True, s covers the full link without the closing sample
            analytic: attach closed-form first and second derivatives
        """
        gamma, velocity, acceleration = (from_complex(z) for z in cone_curve(spec, s))
        rr = np.asarray(r, dtype=float)[:, None, None]
        points = rr * gamma[None, :, :]
        first = second = None
        if analytic:
            ones = np.ones_like(rr)
            first = np.array([ones * gamma[None], rr * velocity[None]])
            second = np.array([np.zeros_like(points), ones * velocity[None], rr * acceleration[None]])
        return SampledImmersion(
            points=points, spacings=(float(r[1] - r[0]), float(s[1] - s[0])), periodic=(False, periodic),
            first_derivatives=first, second_derivatives=second, phi=np.zeros(points.shape[:2]),
            phi_derivatives=np.zeros((2,) + points.shape[:2]),
        )

    def cone_immersion_log_radial(self, spec: ConeSpec, rho: np.ndarray, s: np.ndarray) -> SampledImmersion:
        """Sample l(rho, s) = e^rho gamma(s) over the whole link (periodic in s)."""
        gamma, velocity, acceleration = (from_complex(z) for z in cone_curve(spec, s))
        radius = np.exp(np.asarray(rho, dtype=float))[:, None, None]
        points = radius * gamma[None]
        first = np.array([points, radius * velocity[None]])
        second = np.array([points, radius * velocity[None], radius * acceleration[None]])
        return SampledImmersion(
            points=points, spacings=(float(rho[1] - rho[0]), float(s[1] - s[0])), periodic=(False, True),
            first_derivatives=first, second_derivatives=second, phi=np.zeros(points.shape[:2]),
            phi_derivatives=np.zeros((2,) + points.shape[:2]),
        )

    def catalog(self, pq_max: int, k_max: int = 3) -> Dict[Tuple[int, int, int], ConeSpec]:
        specs = {}
        for p in range(1, pq_max):
            for q in range(1, pq_max - p + 1):
                if math.gcd(p, q) != 1:
                    continue
                for k in range(1, k_max + 1):
                    specs[(p, q, k)] = ConeSpec(p=p, q=q, k=k)
        return specs


# Singleton instance
_cone_service: Optional[ConeCatalogService] = None


def get_cone_service() -> ConeCatalogService:
    """Get or create the cone catalog service singleton"""
    global _cone_service
    if _cone_service is None:
        _cone_service = ConeCatalogService()
    return _cone_service
