# services/immersion.py
"""
Discrete differential geometry of surfaces sampled on a parameter grid in R^4.

shape() populates the tangent frame, induced metric, normal frame, second
fundamental form, mean curvature and the 1-form sigma_H = H _| omega with
its exterior derivative.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple
import logging

import numpy as np

from config.settings import settings
from services.ambient import apply_j, metric, omega
from services.exceptions import DegenerateMetricError, DomainError
from services.numerics import first_derivative, integrate_grid, mixed_derivative, second_derivative

logger = logging.getLogger(__name__)


@dataclass
class OneFormField:
    """Components (sigma_1, sigma_2) of a 1-form on the parameter grid."""
    components: np.ndarray
    spacings: Tuple[float, float]
    periodic: Tuple[bool, bool] = (False, False)
    _d: Optional[np.ndarray] = field(default=None, repr=False)

    def exterior_derivative(self) -> np.ndarray:
        if self._d is None:
            d1_sigma2 = first_derivative(self.components[1], self.spacings[0], axis=0, periodic=self.periodic[0])
            d2_sigma1 = first_derivative(self.components[0], self.spacings[1], axis=1, periodic=self.periodic[1])
            self._d = d1_sigma2 - d2_sigma1
        return self._d


@dataclass
class ShapeCache:
    tangents: np.ndarray            # (2, M, N, 4)
    second: np.ndarray              # (2, 2, M, N, 4) l_ab
    metric: np.ndarray              # (M, N, 2, 2)
    inverse_metric: np.ndarray
    area_element: np.ndarray        # (M, N)
    frame: np.ndarray               # (2, M, N, 4) orthonormal tangent frame
    normals: np.ndarray             # (2, M, N, 4) orthonormal normal frame
    second_fundamental: np.ndarray  # (2, 2, M, N, 4) normal parts of l_ab
    h: np.ndarray                   # (M, N, 2, 2, 2) h_jkl = <B(e_k, e_l), J e_j>
    mean_curvature: np.ndarray      # (M, N, 4)
    sigma_h: OneFormField
    lagrangian_leak: np.ndarray     # (M, N) |omega(e1, e2)|
    one_sided: np.ndarray           # (M, N) boolean boundary mask

    @property
    def d_sigma_h(self) -> np.ndarray:
        return self.sigma_h.exterior_derivative()


@dataclass
class SampledImmersion:
    """
    Surface l(u, v) sampled on an (M, N) grid.

    Optional analytic derivatives: first_derivatives (2, M, N, 4) and
    second_derivatives (3, M, N, 4) ordered (uu, uv, vv). The Legendrian
    lift values phi are carried for the contact computations.
    """
    points: np.ndarray
    spacings: Tuple[float, float]
    periodic: Tuple[bool, bool] = (False, False)
    first_derivatives: Optional[np.ndarray] = None
    second_derivatives: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    phi_derivatives: Optional[np.ndarray] = None
    lagrangian: bool = True
    cache: Optional[ShapeCache] = field(default=None, repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 3 or self.points.shape[2] != 4:
            raise DomainError(f"Immersion samples must have shape (M, N, 4), got {self.points.shape}")
        if min(self.points.shape[:2]) < 4:
            raise DomainError("Immersion grids need at least 4 nodes per direction")

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return self.points.shape[0], self.points.shape[1]

    def tangents(self) -> np.ndarray:
        if self.first_derivatives is not None:
            return np.asarray(self.first_derivatives, dtype=float)
        return grid_tangents(self.points, self.spacings, self.periodic)

    def second_tangents(self) -> np.ndarray:
        if self.second_derivatives is not None:
            uu, uv, vv = np.asarray(self.second_derivatives, dtype=float)
        else:
            uu = second_derivative(self.points, self.spacings[0], axis=0, periodic=self.periodic[0])
            vv = second_derivative(self.points, self.spacings[1], axis=1, periodic=self.periodic[1])
            uv = mixed_derivative(self.points, self.spacings, axes=(0, 1), periodic=self.periodic)
        return np.array([[uu, uv], [uv, vv]])

    def transformed(self, matrix: np.ndarray) -> "SampledImmersion":
        """Apply a linear map of R^4 to the samples and any analytic derivatives."""
        move = lambda arr: None if arr is None else np.einsum("ij,...j->...i", matrix, arr)
        return SampledImmersion(
            points=move(self.points), spacings=self.spacings, periodic=self.periodic,
            first_derivatives=move(self.first_derivatives),
            second_derivatives=move(self.second_derivatives),
            phi=self.phi, phi_derivatives=self.phi_derivatives, lagrangian=self.lagrangian,
        )

    def interior_mask(self, margin: int = 1) -> np.ndarray:
        mask = np.ones(self.grid_shape, dtype=bool)
        if not self.periodic[0]:
            mask[:margin, :] = False
            mask[-margin:, :] = False
        if not self.periodic[1]:
            mask[:, :margin] = False
            mask[:, -margin:] = False
        return mask


def grid_tangents(points: np.ndarray, spacings: Tuple[float, float],
                  periodic: Tuple[bool, bool] = (False, False)) -> np.ndarray:
    return np.array([
        first_derivative(points, spacings[0], axis=0, periodic=periodic[0]),
        first_derivative(points, spacings[1], axis=1, periodic=periodic[1]),
    ])


def induced_metric(tangents: np.ndarray) -> np.ndarray:
    g = np.empty(tangents.shape[1:3] + (2, 2))
    for a in range(2):
        for b in range(2):
            g[..., a, b] = metric(tangents[a], tangents[b])
    return g


def area_density(tangents: np.ndarray) -> np.ndarray:
    g = induced_metric(tangents)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    return np.sqrt(np.maximum(det, 0.0))


def immersion_area(points: np.ndarray, spacings: Tuple[float, float],
                   periodic: Tuple[bool, bool] = (False, False)) -> float:
    """Discrete area: composite quadrature of sqrt(det g) with difference-quotient tangents."""
    return integrate_grid(area_density(grid_tangents(points, spacings, periodic)), spacings, periodic)


def _project_out(vector: np.ndarray, basis: np.ndarray) -> np.ndarray:
    for unit in basis:
        vector = vector - metric(vector, unit)[..., None] * unit
    return vector


def shape(immersion: SampledImmersion, degeneracy_threshold: float = settings.DEGENERACY_THRESHOLD) -> ShapeCache:
    """
    Populate the shape caches of an immersion.

    Args:
        immersion: sampled surface
        degeneracy_threshold: smallest admissible metric determinant at interior nodes

    Returns:
        The populated ShapeCache (also stored on the immersion)
    """
    if immersion.cache is not None:
        return immersion.cache

    tangents = immersion.tangents()
    second = immersion.second_tangents()
    g = induced_metric(tangents)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    interior = immersion.interior_mask()
    if np.any(det[interior] < degeneracy_threshold):
        node = tuple(int(i) for i in np.argwhere(interior & (det < degeneracy_threshold))[0])
        logger.error(f"Degenerate induced metric at node {node}: det = {det[node]:.3e}")
        raise DegenerateMetricError(f"Induced metric degenerate at node {node}", node=node)
    safe_det = np.where(det > 0.0, det, 1.0)
    g_inv = np.empty_like(g)
    g_inv[..., 0, 0] = g[..., 1, 1] / safe_det
    g_inv[..., 1, 1] = g[..., 0, 0] / safe_det
    g_inv[..., 0, 1] = g_inv[..., 1, 0] = -g[..., 0, 1] / safe_det

    # Gram-Schmidt: tangent frame, then J e1, J e2 against it
    e1 = tangents[0] / np.linalg.norm(tangents[0], axis=-1)[..., None]
    e2 = _project_out(tangents[1], [e1])
    e2 = e2 / np.linalg.norm(e2, axis=-1)[..., None]
    n1 = _project_out(apply_j(e1), [e1, e2])
    n1 = n1 / np.linalg.norm(n1, axis=-1)[..., None]
    n2 = _project_out(apply_j(e2), [e1, e2, n1])
    n2 = n2 / np.linalg.norm(n2, axis=-1)[..., None]
    normals = np.array([n1, n2])

    second_ff = np.empty_like(second)
    for a in range(2):
        for b in range(2):
            second_ff[a, b] = sum(metric(second[a, b], n)[..., None] * n for n in normals)
    mean_curvature = sum(g_inv[..., a, b][..., None] * second_ff[a, b] for a in range(2) for b in range(2))

    # coordinate components of B in the orthonormal frame: e_k = C[k, a] l_a
    coeff = np.zeros(g.shape)
    coeff[..., 0, 0] = 1.0 / np.sqrt(g[..., 0, 0])
    proj = g[..., 0, 1] / g[..., 0, 0]
    e2_norm = np.linalg.norm(tangents[1] - proj[..., None] * tangents[0], axis=-1)
    coeff[..., 1, 0] = -proj / e2_norm
    coeff[..., 1, 1] = 1.0 / e2_norm
    frame = np.array([e1, e2])
    h = np.zeros(g.shape[:2] + (2, 2, 2))
    for k in range(2):
        for l in range(2):
            b_kl = sum(coeff[..., k, a][..., None] * coeff[..., l, b][..., None] * second_ff[a, b]
                       for a in range(2) for b in range(2))
            for j in range(2):
                h[..., j, k, l] = metric(b_kl, apply_j(frame[j]))

    sigma = OneFormField(
        components=np.array([omega(mean_curvature, tangents[0]), omega(mean_curvature, tangents[1])]),
        spacings=immersion.spacings,
        periodic=immersion.periodic,
    )
    one_sided = ~immersion.interior_mask()
    if immersion.second_derivatives is None and np.any(one_sided):
        logger.debug(f"{int(one_sided.sum())} boundary nodes use one-sided stencils")

    immersion.cache = ShapeCache(
        tangents=tangents, second=second, metric=g, inverse_metric=g_inv, area_element=np.sqrt(np.maximum(det, 0.0)),
        frame=frame, normals=normals, second_fundamental=second_ff, h=h, mean_curvature=mean_curvature,
        sigma_h=sigma, lagrangian_leak=np.abs(omega(e1, e2)), one_sided=one_sided,
    )
    return immersion.cache


# --- Builders ---

def plane_immersion(x1: np.ndarray, x2: np.ndarray) -> SampledImmersion:
    """Flat Lagrangian plane (x1, x2) -> (x1, 0, x2, 0)."""
    grid1, grid2 = np.meshgrid(x1, x2, indexing="ij")
    zeros = np.zeros_like(grid1)
    points = np.stack([grid1, zeros, grid2, zeros], axis=-1)
    return SampledImmersion(points=points, spacings=(x1[1] - x1[0], x2[1] - x2[0]), phi=zeros.copy())


def gradient_graph_immersion(
    x1: np.ndarray,
    x2: np.ndarray,
    potential: Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]],
) -> SampledImmersion:
    """
    Lagrangian graph y = grad u over a rectangle, with its Legendrian lift.

    Args:
        x1, x2: uniform axes
        potential: returns (u, u_1, u_2) at the grid points

    Returns:
        SampledImmersion with phi = x . grad u - 2u
    """
    grid1, grid2 = np.meshgrid(x1, x2, indexing="ij")
    u, u1, u2 = potential(grid1, grid2)
    points = np.stack([grid1, u1, grid2, u2], axis=-1)
    phi = grid1 * u1 + grid2 * u2 - 2.0 * u
    return SampledImmersion(points=points, spacings=(x1[1] - x1[0], x2[1] - x2[0]), phi=phi)
