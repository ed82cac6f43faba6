# services/second_variation.py
"""
Second variation of area in flat R^4.

straight_line_second_variation evaluates the general formula for variations
l + tX with X fixed (no acceleration term, no ambient curvature).
oh_second_variation evaluates the Hamiltonian form for X = J grad f on a
Lagrangian immersion.
"""
from typing import Optional, Sequence
import logging

import numpy as np

from config.settings import settings
from services.ambient import apply_j, metric
from services.exceptions import NonLagrangianError, SupportViolationError
from services.immersion import SampledImmersion, shape
from services.numerics import first_derivative, integrate_grid, mixed_derivative, second_derivative

logger = logging.getLogger(__name__)


def _check_support(field_values: np.ndarray, immersion: SampledImmersion, name: str,
                   margin: int = settings.SUPPORT_MARGIN, tol: float = settings.SUPPORT_TOL):
    band = ~immersion.interior_mask(margin)
    if not np.any(band):
        return
    worst = float(np.max(np.abs(field_values[band])))
    scale = max(1.0, float(np.max(np.abs(field_values))))
    if worst > tol * scale:
        raise SupportViolationError(f"{name} does not vanish on the outer {margin} grid layers (max {worst:.3e})")


def _tangential_coords(vector: np.ndarray, tangents: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """Contravariant components v^a with v^T = v^a l_a."""
    lowered = np.stack([metric(vector, tangents[0]), metric(vector, tangents[1])], axis=-1)
    return np.einsum("...ab,...b->...a", g_inv, lowered)


def _normal_part(vector: np.ndarray, tangents: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    coords = _tangential_coords(vector, tangents, g_inv)
    return vector - coords[..., 0:1] * tangents[0] - coords[..., 1:2] * tangents[1]


def straight_line_second_variation(immersion: SampledImmersion, X: np.ndarray) -> float:
    """
    Second derivative of area along l + tX at t = 0.

    Pointwise the integrand is |grad^perp X|^2 - tr((M g^-1)^2) + (tr M g^-1)^2,
    M_ab = <X_a, l_b>, which is exactly d^2/dt^2 sqrt(det g(t)).

    Args:
        immersion: sampled surface (derivatives taken with the same stencils as the area)
        X: variation field, shape (M, N, 4), vanishing on the outer layers

    Returns:
        The quadrature of the integrand
    """
    X = np.asarray(X, dtype=float)
    _check_support(X, immersion, "Variation field")
    cache = shape(immersion)
    tangents, g_inv = cache.tangents, cache.inverse_metric
    dX = np.array([
        first_derivative(X, immersion.spacings[0], axis=0, periodic=immersion.periodic[0]),
        first_derivative(X, immersion.spacings[1], axis=1, periodic=immersion.periodic[1]),
    ])
    M = np.empty(g_inv.shape)
    for a in range(2):
        for b in range(2):
            M[..., a, b] = metric(dX[a], tangents[b])
    perp = np.array([_normal_part(dX[a], tangents, g_inv) for a in range(2)])
    normal_term = sum(g_inv[..., a, b] * metric(perp[a], perp[b]) for a in range(2) for b in range(2))
    mixed = np.einsum("...ab,...bc->...ac", M, g_inv)
    cross_term = np.einsum("...ab,...ba->...", mixed, mixed)
    trace_term = np.trace(mixed, axis1=-2, axis2=-1) ** 2
    integrand = (normal_term - cross_term + trace_term) * cache.area_element
    return integrate_grid(integrand, immersion.spacings, immersion.periodic)


def oh_second_variation(
    immersion: SampledImmersion,
    f: np.ndarray,
    f_derivatives: Optional[Sequence[np.ndarray]] = None,
) -> float:
    """
    Hamiltonian second variation for X = J grad f on a Lagrangian immersion.

    For a Lagrangian surface J X^perp = -grad f, so the first term is the
    squared norm of the intrinsic Hessian of f.

    Args:
        immersion: Lagrangian sampled surface
        f: Hamiltonian on the grid, compactly supported
        f_derivatives: optional (f_u, f_v, f_uu, f_uv, f_vv) analytic derivatives

    Returns:
        The quadrature of |Hess f|^2 + <X,H>^2 - sum <X,B_ij>^2 - <X, B(JH, JX)>
    """
    f = np.asarray(f, dtype=float)
    _check_support(f, immersion, "Hamiltonian")
    cache = shape(immersion)
    leak = float(np.max(cache.lagrangian_leak[immersion.interior_mask()]))
    if immersion.lagrangian is False or leak > settings.LAGRANGIAN_TOL:
        raise NonLagrangianError(f"Immersion is not Lagrangian: max |omega(e1, e2)| = {leak:.3e}")

    h_u, h_v = immersion.spacings
    per = immersion.periodic
    if f_derivatives is None:
        f_u = first_derivative(f, h_u, axis=0, periodic=per[0])
        f_v = first_derivative(f, h_v, axis=1, periodic=per[1])
        f_uu = second_derivative(f, h_u, axis=0, periodic=per[0])
        f_vv = second_derivative(f, h_v, axis=1, periodic=per[1])
        f_uv = mixed_derivative(f, (h_u, h_v), periodic=per)
    else:
        f_u, f_v, f_uu, f_uv, f_vv = (np.asarray(d, dtype=float) for d in f_derivatives)

    tangents, second, g_inv = cache.tangents, cache.second, cache.inverse_metric
    df = np.stack([f_u, f_v], axis=-1)
    grad_coords = np.einsum("...ab,...b->...a", g_inv, df)
    grad_f = grad_coords[..., 0:1] * tangents[0] + grad_coords[..., 1:2] * tangents[1]
    X = apply_j(grad_f)
    X_perp = sum(metric(X, n)[..., None] * n for n in cache.normals)

    # Christoffel symbols Gamma^c_ab = g^cd <l_ab, l_d>
    hessian = np.empty(g_inv.shape)
    raw = {(0, 0): f_uu, (0, 1): f_uv, (1, 0): f_uv, (1, 1): f_vv}
    for a in range(2):
        for b in range(2):
            lowered = np.stack([metric(second[a, b], tangents[0]), metric(second[a, b], tangents[1])], axis=-1)
            gamma = np.einsum("...cd,...d->...c", g_inv, lowered)
            hessian[..., a, b] = raw[(a, b)] - np.einsum("...c,...c->...", gamma, df)
    raised = np.einsum("...ac,...cd,...db->...ab", g_inv, hessian, g_inv)
    hessian_term = np.einsum("...ab,...ab->...", raised, hessian)

    mean_term = metric(X_perp, cache.mean_curvature) ** 2
    b_pairs = np.empty(g_inv.shape)
    for a in range(2):
        for b in range(2):
            b_pairs[..., a, b] = metric(X_perp, cache.second_fundamental[a, b])
    raised_b = np.einsum("...ac,...cd,...db->...ab", g_inv, b_pairs, g_inv)
    second_ff_term = np.einsum("...ab,...ab->...", raised_b, b_pairs)

    v_coords = _tangential_coords(apply_j(cache.mean_curvature), tangents, g_inv)
    w_coords = _tangential_coords(apply_j(X_perp), tangents, g_inv)
    mixed_term = sum(v_coords[..., a] * w_coords[..., b] * b_pairs[..., a, b] for a in range(2) for b in range(2))

    integrand = (hessian_term + mean_term - second_ff_term - mixed_term) * cache.area_element
    return integrate_grid(integrand, immersion.spacings, immersion.periodic)
