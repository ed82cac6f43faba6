# services/ambient.py
"""
Flat C^2 = R^4 conventions.

Coordinates are ordered (x1, y1, x2, y2) with z_j = x_j + i y_j. J is
multiplication by i, omega = dx1^dy1 + dx2^dy2, g is Euclidean and the
primitive eta = sum(x_j dy_j - y_j dx_j) satisfies d(eta) = 2 omega.
The contact form on R^5 = R^4 x R_phi is alpha = d(phi) - eta.
"""
from typing import Dict, Optional
import logging

import numpy as np
import sympy as sp

logger = logging.getLogger(__name__)

J_MATRIX = np.array([
    [0.0, -1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, -1.0],
    [0.0, 0.0, 1.0, 0.0],
])

# omega(v, w) = v^T OMEGA_MATRIX w
OMEGA_MATRIX = np.array([
    [0.0, 1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0, 0.0],
])

# sigma_H = H _| omega equals SIGMA_H_SIGN * d(beta) in flat C^2
SIGMA_H_SIGN = -1


def apply_j(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    out[..., 2] = -v[..., 3]
    out[..., 3] = v[..., 2]
    return out


def omega(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return (v[..., 0] * w[..., 1] - v[..., 1] * w[..., 0]
            + v[..., 2] * w[..., 3] - v[..., 3] * w[..., 2])


def metric(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", np.asarray(v, dtype=float), np.asarray(w, dtype=float))


def pair(v: np.ndarray, w: Optional[np.ndarray] = None, which: str = "omega"):
    """
    Evaluate one of the ambient structures on vectors (vectorized over leading axes).

    Args:
        v: vector(s) with last axis of length 4
        w: second vector(s); ignored for "J-apply"
        which: "omega", "metric" or "J-apply"

    Returns:
        omega(v, w), g(v, w) or Jv
    """
    if which == "omega":
        return omega(v, w)
    if which == "metric":
        return metric(v, w)
    if which == "J-apply":
        return apply_j(v)
    raise ValueError(f"Unknown pairing '{which}', expected omega, metric or J-apply")


def eta(points: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Primitive eta_P(v) = <JP, v>."""
    return metric(apply_j(points), v)


def contact_form(points: np.ndarray, v: np.ndarray, v_phi: np.ndarray) -> np.ndarray:
    """alpha = d(phi) - eta evaluated on (v, v_phi) at base points."""
    return np.asarray(v_phi, dtype=float) - eta(points, v)


def to_complex(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return np.stack([points[..., 0] + 1j * points[..., 1], points[..., 2] + 1j * points[..., 3]], axis=-1)


def from_complex(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.stack([z[..., 0].real, z[..., 0].imag, z[..., 1].real, z[..., 1].imag], axis=-1)


def unitary_to_real(u: np.ndarray) -> np.ndarray:
    """Real 4x4 matrix acting on (x1, y1, x2, y2) as the complex 2x2 matrix u acts on (z1, z2)."""
    u = np.asarray(u, dtype=complex)
    out = np.zeros((4, 4))
    for row in range(2):
        for col in range(2):
            a, b = u[row, col].real, u[row, col].imag
            out[2 * row:2 * row + 2, 2 * col:2 * col + 2] = [[a, -b], [b, a]]
    return out


def symbolic_d_eta() -> sp.Matrix:
    """Return d(eta) - 2 omega as a symbolic 4x4 matrix of components; zero under these conventions."""
    x1, y1, x2, y2 = sp.symbols("x1 y1 x2 y2", real=True)
    coords = [x1, y1, x2, y2]
    # eta = x1 dy1 - y1 dx1 + x2 dy2 - y2 dx2, components in coordinate order
    eta_components = [-y1, x1, -y2, x2]
    d_eta = sp.Matrix(4, 4, lambda a, b: sp.diff(eta_components[b], coords[a]) - sp.diff(eta_components[a], coords[b]))
    return sp.simplify(d_eta - 2 * sp.Matrix(OMEGA_MATRIX.astype(int)))


class AmbientConventions:
    """The compatible triple (omega, g, J) and its primitive."""

    coordinate_order = ("x1", "y1", "x2", "y2")
    j_matrix = J_MATRIX
    omega_matrix = OMEGA_MATRIX
    sigma_h_sign = SIGMA_H_SIGN

    def verify(self, n_random: int = 100, seed: int = 0) -> Dict[str, float]:
        """
        Check the compatibility identities on the basis and on seeded random pairs.

        Returns:
            Dictionary of maximal defects (all zero up to rounding)
        """
        rng = np.random.default_rng(seed)
        basis = np.eye(4)
        v = np.concatenate([np.repeat(basis, 4, axis=0), rng.standard_normal((n_random, 4))])
        w = np.concatenate([np.tile(basis, (4, 1)), rng.standard_normal((n_random, 4))])
        defects = {
            "omega_j_metric": float(np.max(np.abs(omega(v, apply_j(w)) - metric(v, w)))),
            "j_invariance": float(np.max(np.abs(omega(apply_j(v), apply_j(w)) - omega(v, w)))),
            "j_squared": float(np.max(np.abs(apply_j(apply_j(v)) + v))),
            "d_eta": float(max(abs(float(entry)) for entry in symbolic_d_eta())),
        }
        logger.info(f"Ambient convention defects: {defects}")
        return defects
