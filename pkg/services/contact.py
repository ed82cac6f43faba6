# services/contact.py
"""
Contact geometry on R^5 = R^4 x R_phi and the density ratio of Legendrian lifts.

Coordinates: s = |P|^2 / 2, s~ = sqrt(s^2 + phi^2), t = log s~,
theta = arctan(phi / s). The contact vector field of a function h is

    X_h = h_x d_y - h_y d_x - h_phi (x d_x + y d_y) + (-2h + x h_x + y h_y) d_phi

and satisfies L_{X_h} alpha = -2 h_phi alpha for alpha = d(phi) - eta.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Union
import logging
import math

import numpy as np
import sympy as sp
from pydantic import BaseModel, Field
from scipy.integrate import solve_ivp
from scipy.interpolate import RectBivariateSpline

from models.cone import ConeSpec
from models.kernel import DensityRecord, IdentityReport, LieCheckReport
from services.ambient import apply_j, eta, metric
from services.cone_catalog import get_cone_service
from services.exceptions import DomainError, SupportViolationError
from services.immersion import SampledImmersion, induced_metric
from services.kernel import HALF_PI, KernelTables
from services.numerics import first_derivative, integrate_grid

logger = logging.getLogger(__name__)

COORDINATES = sp.symbols("x1 y1 x2 y2 phi", real=True)
NONSMOOTH = (sp.Abs, sp.sign, sp.Heaviside, sp.Max, sp.Min, sp.floor, sp.ceiling, sp.Piecewise)
MIN_S = 1e-8


class HeisenbergPoint(BaseModel):
    """A point of R^5 with its Heisenberg-type coordinates."""
    x: List[float] = Field(..., min_length=2, max_length=2)
    y: List[float] = Field(..., min_length=2, max_length=2)
    phi: float = 0.0

    @classmethod
    def from_points(cls, point: np.ndarray, phi: float = 0.0) -> "HeisenbergPoint":
        """From a point (x1, y1, x2, y2) of R^4 and a lift value."""
        x1, y1, x2, y2 = (float(v) for v in point)
        return cls(x=[x1, x2], y=[y1, y2], phi=phi)

    @property
    def s(self) -> float:
        return 0.5 * sum(v * v for v in self.x + self.y)

    @property
    def s_tilde(self) -> float:
        return math.hypot(self.s, self.phi)

    @property
    def t(self) -> float:
        return math.log(self.s_tilde)

    @property
    def theta(self) -> float:
        return math.atan2(self.phi, self.s)

    @property
    def r0(self) -> float:
        return math.sqrt(2.0) * (self.s ** 2 + self.phi ** 2) ** 0.25


def heisenberg_coordinates(points: np.ndarray, phi: np.ndarray) -> Dict[str, np.ndarray]:
    """Vectorized s, s~, t, theta and r0 on sampled points."""
    points = np.asarray(points, dtype=float)
    s = 0.5 * np.sum(points * points, axis=-1)
    s_tilde = np.hypot(s, phi)
    return {
        "s": s,
        "s_tilde": s_tilde,
        "t": np.log(s_tilde),
        "theta": np.arctan2(phi, s),
        "r0": np.sqrt(2.0 * s_tilde),
    }


# --- Contact vector fields ---

@dataclass
class ContactField:
    """Symbolic contact vector field with compiled value and Jacobian."""
    h: sp.Expr
    components: sp.Matrix
    jacobian_matrix: sp.Matrix

    def __post_init__(self):
        self._vector = sp.lambdify(COORDINATES, list(self.components), "numpy")
        self._jacobian = sp.lambdify(COORDINATES, self.jacobian_matrix, "numpy")
        self._h_phi = sp.lambdify(COORDINATES, sp.diff(self.h, COORDINATES[4]), "numpy")

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        values = self._vector(*z)
        return np.array([np.broadcast_to(v, z.shape[1:]) for v in values], dtype=float)

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(self._jacobian(*np.asarray(z, dtype=float)), dtype=float)

    def h_phi(self, z: np.ndarray) -> float:
        return float(self._h_phi(*np.asarray(z, dtype=float)))


def contact_field(h: Union[str, sp.Expr]) -> ContactField:
    """
    Contact vector field of a smooth function h(x1, y1, x2, y2, phi).

    Args:
        h: sympy expression or string in the symbols x1, y1, x2, y2, phi

    Raises:
        DomainError: h uses non-smooth functions or other symbols
    """
    h = sp.sympify(h, locals={str(c): c for c in COORDINATES})
    if not h.free_symbols <= set(COORDINATES):
        raise DomainError(f"h may only depend on {COORDINATES}, got {h.free_symbols}")
    if h.has(*NONSMOOTH):
        raise DomainError(f"h = {h} is not differentiable")
    x1, y1, x2, y2, phi = COORDINATES
    h_phi = sp.diff(h, phi)
    radial = x1 * sp.diff(h, x1) + x2 * sp.diff(h, x2) + y1 * sp.diff(h, y1) + y2 * sp.diff(h, y2)
    components = sp.Matrix([
        -sp.diff(h, y1) - h_phi * x1,
        sp.diff(h, x1) - h_phi * y1,
        -sp.diff(h, y2) - h_phi * x2,
        sp.diff(h, x2) - h_phi * y2,
        -2 * h + radial,
    ])
    return ContactField(h=h, components=components, jacobian_matrix=components.jacobian(COORDINATES))


def contact_form_on(z: np.ndarray, v: np.ndarray) -> np.ndarray:
    """alpha_z(v) = v_phi - eta_P(v_P) for columns v."""
    base = np.asarray(z[:4], dtype=float)
    return v[4] - eta(base[:, None].T, v[:4].T)


def lie_check(h: Union[str, sp.Expr], z0: np.ndarray, tau: float = 0.1, step: float = 1e-3) -> LieCheckReport:
    """
    Check d/dtau (Phi_tau* alpha) = -2 h_phi(Phi_tau) (Phi_tau* alpha) along the flow.

    The flow and its linearization are integrated together with DOP853; the
    tau-derivative is a central difference of width 2 step.
    """
    field = contact_field(h)
    z0 = np.asarray(z0, dtype=float)
    if tau <= step:
        raise DomainError("tau must exceed the difference step")

    def rhs(_, state):
        z, tangent = state[:5], state[5:].reshape(5, 5)
        return np.concatenate([field(z), (field.jacobian(z) @ tangent).ravel()])

    start = np.concatenate([z0, np.eye(5).ravel()])
    times = [tau - step, tau, tau + step]
    solution = solve_ivp(rhs, (0.0, tau + step), start, method="DOP853", t_eval=times, rtol=1e-12, atol=1e-12)
    if not solution.success:
        raise DomainError(f"Contact flow integration failed: {solution.message}")

    pulled = [contact_form_on(solution.y[:5, i], solution.y[5:, i].reshape(5, 5)) for i in range(3)]
    lhs = (pulled[2] - pulled[0]) / (2.0 * step)
    h_phi = field.h_phi(solution.y[:5, 1])
    rhs_value = -2.0 * h_phi * pulled[1]
    defect = float(np.max(np.abs(lhs - rhs_value))) / max(1.0, float(np.max(np.abs(pulled[1]))))
    logger.debug(f"lie_check for h = {field.h}: defect {defect:.3e}")
    return LieCheckReport(expression=str(field.h), tau=tau, step=step, defect=defect, h_phi=h_phi)


# --- Tangential identities on lifted surfaces ---

def _tangential_product(df: np.ndarray, dg: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    return np.einsum("amn,mnab,bmn->mn", df, g_inv, dg)


def _divergence(field: np.ndarray, tangents: np.ndarray, g_inv: np.ndarray, immersion: SampledImmersion
                ) -> np.ndarray:
    """div_Sigma X = g^ab <d_a X, l_b>."""
    derivative = np.array([
        first_derivative(field, immersion.spacings[a], axis=a, periodic=immersion.periodic[a]) for a in range(2)
    ])
    pairing = np.array([[metric(derivative[a], tangents[b]) for b in range(2)] for a in range(2)])
    return np.einsum("abmn,mnab->mn", pairing, g_inv)


def legendrian_defect(immersion: SampledImmersion) -> float:
    """max |d(phi) - eta| on the coordinate directions, relative to max |eta|."""
    if immersion.phi is None:
        raise DomainError("The immersion carries no Legendrian lift")
    tangents = immersion.tangents()
    if immersion.phi_derivatives is not None:
        d_phi = np.asarray(immersion.phi_derivatives, dtype=float)
    else:
        d_phi = np.array([first_derivative(immersion.phi, immersion.spacings[a], axis=a,
                                           periodic=immersion.periodic[a]) for a in range(2)])
    primitive = np.array([eta(immersion.points, tangents[a]) for a in range(2)])
    mask = immersion.interior_mask()
    return float(np.max(np.abs(d_phi - primitive)[:, mask])) / max(float(np.max(np.abs(primitive))), 1.0)


def tangential_identities(immersion: SampledImmersion, margin: int = 2) -> IdentityReport:
    """
    Residuals of the tangential identities on a lifted Lagrangian surface:

        div(X_theta) = -2 |grad theta|^2
        div(X_t) = -2 sin(theta) / s~ - 2 grad theta . grad t
        |grad t|^2 + |grad theta|^2 = 2 cos(theta) / s~

    Residuals are maxima over the interior relative to max 2 / s~.

    Raises:
        SupportViolationError: the surface reaches s = 0
    """
    if immersion.phi is None:
        raise DomainError("The immersion carries no Legendrian lift")
    coords = heisenberg_coordinates(immersion.points, immersion.phi)
    s, phi, s_tilde = coords["s"], np.asarray(immersion.phi, dtype=float), coords["s_tilde"]
    if np.min(s) <= MIN_S:
        raise SupportViolationError(f"Surface touches s = 0 (min s = {np.min(s):.3e})")

    tangents = immersion.tangents()
    g = induced_metric(tangents)
    g_inv = np.linalg.inv(g)
    grad = {
        name: np.array([first_derivative(coords[name], immersion.spacings[a], axis=a,
                                         periodic=immersion.periodic[a]) for a in range(2)])
        for name in ("t", "theta")
    }
    grad_t2 = _tangential_product(grad["t"], grad["t"], g_inv)
    grad_theta2 = _tangential_product(grad["theta"], grad["theta"], g_inv)
    grad_cross = _tangential_product(grad["theta"], grad["t"], g_inv)

    P = immersion.points
    JP = apply_j(P)
    inv2 = 1.0 / (s_tilde * s_tilde)
    # X_h restricted to R^4 for h = h(s, phi): h_s JP - h_phi P
    x_t = (s * inv2)[..., None] * JP - (phi * inv2)[..., None] * P
    x_theta = -(phi * inv2)[..., None] * JP - (s * inv2)[..., None] * P

    theta = coords["theta"]
    residual_theta = _divergence(x_theta, tangents, g_inv, immersion) + 2.0 * grad_theta2
    residual_t = _divergence(x_t, tangents, g_inv, immersion) + 2.0 * np.sin(theta) / s_tilde + 2.0 * grad_cross
    residual_sum = grad_t2 + grad_theta2 - 2.0 * np.cos(theta) / s_tilde

    mask = immersion.interior_mask(margin)
    scale = float(np.max(2.0 / s_tilde[mask]))
    report = IdentityReport(
        divergence_theta=float(np.max(np.abs(residual_theta[mask]))) / scale,
        divergence_t=float(np.max(np.abs(residual_t[mask]))) / scale,
        gradient_sum=float(np.max(np.abs(residual_sum[mask]))) / scale,
        relative_scale=scale,
        legendrian_defect=legendrian_defect(immersion),
        nodes=int(mask.sum()),
    )
    logger.debug(f"Tangential identities: {report.model_dump()}")
    return report


# --- Density ratio ---

class KernelLookup:
    """
    F(t, theta) from kernel tables, with the exact far-left value lam/2 below
    the table and 0 above it.
    """

    def __init__(self, tables: KernelTables):
        self.tables = tables
        self.lam = tables.cutoff.lam
        self.far_left_ok = tables.t[0] <= -tables.cutoff.c - HALF_PI
        self.far_right_ok = tables.t[-1] >= math.log(0.5) + HALF_PI
        self._spline = RectBivariateSpline(tables.t, tables.theta, tables.scaled_F, kx=3, ky=3)

    def scaled(self, t: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """e^t F(t, theta)."""
        t, theta = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(theta, dtype=float))
        t_min, t_max = self.tables.t[0], self.tables.t[-1]
        if (np.any(t < t_min) and not self.far_left_ok) or (np.any(t > t_max) and not self.far_right_ok):
            raise SupportViolationError(
                f"Surface reaches t outside the table range [{t_min:.3f}, {t_max:.3f}]"
            )
        inside = self._spline.ev(np.clip(t, t_min, t_max), theta)
        below = 0.5 * self.lam * np.exp(np.minimum(t, t_min))
        return np.where(t < t_min, below, np.where(t > t_max, 0.0, inside))

    def __call__(self, t: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return np.exp(-np.asarray(t, dtype=float)) * self.scaled(t, theta)


def density_ratio(immersion: SampledImmersion, a: float, tables: KernelTables,
                  lookup: Optional[KernelLookup] = None, label: str = "") -> DensityRecord:
    """
    (pi a^2)^-1 times the integral of F_a over the surface, with
    F_a(t, theta) = F(t - 2 log a, theta) along the Legendrian lift.

    F_a is formed as (e^t F)(t_a, theta) a^2 / s~ so that no exponentially
    large factor appears.
    """
    if a <= 0:
        raise DomainError("Radius a must be positive")
    if immersion.phi is None:
        raise DomainError("The immersion carries no Legendrian lift")
    lookup = lookup or KernelLookup(tables)
    coords = heisenberg_coordinates(immersion.points, immersion.phi)
    t_a = coords["t"] - 2.0 * math.log(a)
    # F_a = e^(-t_a) (e^t F)(t_a) and e^(-t_a) = a^2 / s~
    integrand = lookup.scaled(t_a, coords["theta"]) * a * a / coords["s_tilde"]
    g = induced_metric(immersion.tangents())
    area_element = np.sqrt(np.maximum(g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2, 0.0))
    total = integrate_grid(integrand * area_element, immersion.spacings, immersion.periodic)
    ratio = total / (math.pi * a * a)
    logger.info(f"Density ratio {label} at a = {a}: {ratio:.10f}")
    return DensityRecord(spec=label, a=a, ratio=ratio)


def cone_density_study(spec: ConeSpec, radii: List[float], tables: KernelTables, s_samples: int = 64,
                       rho_step: float = 0.025) -> List[DensityRecord]:
    """density_ratio of a (p, q) cone at several radii, sampled in log radius."""
    service = get_cone_service()
    lookup = KernelLookup(tables)
    records = []
    for a in radii:
        # t = 2 rho - log 2 on the cone; cover the table plus a far-left margin
        t_lo = tables.t[0] - 15.0 + 2.0 * math.log(a)
        t_hi = tables.t[-1] + 1.0 + 2.0 * math.log(a)
        rho_lo, rho_hi = 0.5 * (t_lo + math.log(2.0)), 0.5 * (t_hi + math.log(2.0))
        nodes = 2 * int(math.ceil((rho_hi - rho_lo) / (2.0 * rho_step))) + 1
        rho = np.linspace(rho_lo, rho_hi, nodes)
        s = np.linspace(0.0, spec.length, s_samples, endpoint=False)
        immersion = service.cone_immersion_log_radial(spec, rho, s)
        record = density_ratio(immersion, a, tables, lookup=lookup, label=f"({spec.p},{spec.q},{spec.k})")
        record.extra["expected"] = spec.density
        records.append(record)
    return records
