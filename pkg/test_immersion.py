# test_immersion.py
import math

import numpy as np
import pytest

from models.cone import ConeSpec
from services.ambient import SIGMA_H_SIGN, omega, unitary_to_real
from services.cone_catalog import get_cone_service
from services.exceptions import DegenerateMetricError, DomainError
from services.immersion import (
    SampledImmersion,
    gradient_graph_immersion,
    immersion_area,
    plane_immersion,
    shape,
)
from services.numerics import observed_order


def _harmonic_cubic(x1, x2):
    return x1 ** 3 - 3.0 * x1 * x2 ** 2, 3.0 * x1 ** 2 - 3.0 * x2 ** 2, -6.0 * x1 * x2


def _quadratic(x1, x2):
    u = 0.3 * x1 ** 2 + 0.2 * x1 * x2 - 0.4 * x2 ** 2 + 0.1 * x1
    return u, 0.6 * x1 + 0.2 * x2 + 0.1, 0.2 * x1 - 0.8 * x2


CONE_RADII = np.linspace(0.5, 2.0, 7)


def _wave(x1, x2):
    theta = x1 + 2.0 * x2
    return 0.3 * np.sin(theta), 0.3 * np.cos(theta), 0.6 * np.cos(theta)


def _wave_angle_gradient(x1, x2):
    """beta = arctan(-1.5 sin(x1 + 2 x2)), the Hessian having eigenvalues 0 and -1.5 sin."""
    theta = x1 + 2.0 * x2
    slope = -1.5 * np.cos(theta) / (1.0 + 2.25 * np.sin(theta) ** 2)
    return slope, 2.0 * slope


def _central(values, x):
    """Entries whose nodes lie in [0.25, 0.75] in both directions."""
    inside = (x >= 0.25 - 1e-12) & (x <= 0.75 + 1e-12)
    return values[np.ix_(inside, inside)]


def _numeric_cone(spec: ConeSpec, n_s: int) -> SampledImmersion:
    r = CONE_RADII
    s = np.linspace(0.0, spec.length, n_s, endpoint=False)
    return get_cone_service().cone_immersion(spec, r, s, analytic=False, periodic=True)


# --- Flat examples ---

def test_01_plane_is_flat():
    """Test 1: the Lagrangian plane has no curvature and unit area on the unit square"""
    x = np.linspace(0.0, 1.0, 21)
    immersion = plane_immersion(x, x)
    cache = shape(immersion)
    assert np.max(np.abs(cache.mean_curvature)) <= 1e-12
    assert np.max(np.abs(cache.second_fundamental)) <= 1e-12
    assert np.max(cache.lagrangian_leak) == 0.0
    assert immersion_area(immersion.points, immersion.spacings) == pytest.approx(1.0, abs=1e-14)


def test_02_quadratic_graph_area():
    """Test 2: the graph of grad(c |x|^2 / 2) has area (1 + c^2) |Omega|"""
    c = 0.7
    x = np.linspace(0.0, 2.0, 17)
    immersion = gradient_graph_immersion(x, x, lambda a, b: (0.5 * c * (a * a + b * b), c * a, c * b))
    assert immersion_area(immersion.points, immersion.spacings) == pytest.approx(4.0 * (1.0 + c * c), rel=1e-13)


def test_03_gradient_graphs_are_lagrangian():
    """Test 3: omega vanishes on the graph of a gradient"""
    x = np.linspace(0.5, 1.5, 41)
    immersion = gradient_graph_immersion(x, x, _harmonic_cubic)
    cache = shape(immersion)
    assert np.max(cache.lagrangian_leak[immersion.interior_mask()]) <= 1e-10


def test_04_legendrian_lift_of_graph():
    """Test 4: d(phi) = eta along the graph lift phi = x . grad u - 2u (exact stencils for quadratics)"""
    x = np.linspace(0.5, 1.5, 21)
    immersion = gradient_graph_immersion(x, x, _quadratic)
    tangents = immersion.tangents()
    h = immersion.spacings[0]
    d_phi = np.gradient(immersion.phi, h, h, edge_order=2)
    points = immersion.points
    for a in range(2):
        eta_a = (points[..., 0] * tangents[a][..., 1] - points[..., 1] * tangents[a][..., 0]
                 + points[..., 2] * tangents[a][..., 3] - points[..., 3] * tangents[a][..., 2])
        assert np.max(np.abs(d_phi[a] - eta_a)) <= 1e-11


# --- Degeneracy and input checks ---

def test_05_degenerate_metric_reports_node():
    """Test 5: a collapsed surface raises with the offending node"""
    x = np.linspace(0.0, 1.0, 8)
    grid1, _ = np.meshgrid(x, x, indexing="ij")
    zeros = np.zeros_like(grid1)
    immersion = SampledImmersion(points=np.stack([grid1, zeros, zeros, zeros], axis=-1), spacings=(x[1], x[1]))
    with pytest.raises(DegenerateMetricError) as info:
        shape(immersion)
    assert info.value.node is not None and len(info.value.node) == 2


def test_06_small_grids_rejected():
    """Test 6: immersions need at least 4 nodes per direction"""
    with pytest.raises(DomainError):
        SampledImmersion(points=np.zeros((3, 10, 4)), spacings=(1.0, 1.0))


# --- Cones ---

def test_07_cone_second_fundamental_form():
    """Test 7: discrete B on a (1, 2) cone over r in [0.5, 2]: B_rr = B_rs = 0 and B_ss = r (gamma'' + gamma)"""
    spec = ConeSpec(p=1, q=2)
    errors = []
    for n_s in (4443, 8886):
        immersion = _numeric_cone(spec, n_s)
        cache = shape(immersion)
        r = CONE_RADII[:, None, None]
        s = np.linspace(0.0, spec.length, n_s, endpoint=False)
        exact = get_cone_service().cone_shape(spec, r[..., 0], s)
        rows = slice(1, -1)
        b_ss = cache.second_fundamental[1, 1][rows] / r[rows] ** 2
        error = max(
            float(np.max(np.abs(b_ss - exact.B22[rows]))),
            float(np.max(np.abs(cache.second_fundamental[0, 0][rows]))),
            float(np.max(np.abs(cache.second_fundamental[0, 1][rows] / r[rows]))),
        )
        errors.append(error)
    assert errors[1] <= 2e-5
    assert observed_order(errors[0], errors[1]) >= 1.8


def test_08_cone_mean_curvature_closed_form():
    """Test 8: analytic cone samples reproduce H = (gamma'' + gamma) / r"""
    spec = ConeSpec(p=2, q=3)
    r = np.linspace(0.5, 1.5, 11)
    s = np.linspace(0.0, spec.length, 256, endpoint=False)
    cache = shape(get_cone_service().cone_immersion(spec, r, s, periodic=True))
    exact = get_cone_service().cone_shape(spec, r[:, None], s)
    assert np.max(np.abs(cache.mean_curvature - exact.H)) <= 1e-12
    assert np.max(cache.lagrangian_leak) <= 1e-12


def test_09_sigma_h_sign_on_cone():
    """Test 9: sigma_H = -d(beta) on the (1, 2) cone"""
    spec = ConeSpec(p=1, q=2)
    r = np.linspace(0.5, 1.5, 11)
    s = np.linspace(0.0, spec.length, 128, endpoint=False)
    cache = shape(get_cone_service().cone_immersion(spec, r, s, periodic=True))
    d_beta_ds = 2.0 * spec.a
    assert np.allclose(cache.sigma_h.components[1], SIGMA_H_SIGN * d_beta_ds, atol=1e-12)
    assert np.allclose(cache.sigma_h.components[0], 0.0, atol=1e-12)
    assert get_cone_service().sigma_h_on_cone(spec) == pytest.approx(SIGMA_H_SIGN * d_beta_ds, abs=1e-15)
    assert np.max(np.abs(cache.d_sigma_h[1:-1])) <= 1e-10


def test_10_unitary_invariance(rng):
    """Test 10: H moves with a unitary map and sigma_H is unchanged"""
    spec = ConeSpec(p=1, q=3)
    r = np.linspace(0.5, 1.5, 9)
    s = np.linspace(0.0, spec.length, 128, endpoint=False)
    immersion = get_cone_service().cone_immersion(spec, r, s, periodic=True)
    z = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    unitary, _ = np.linalg.qr(z)
    real = unitary_to_real(unitary)
    moved = immersion.transformed(real)
    before, after = shape(immersion), shape(moved)
    assert np.allclose(after.mean_curvature, before.mean_curvature @ real.T, atol=1e-12)
    assert np.allclose(after.sigma_h.components, before.sigma_h.components, atol=1e-12)


def test_11_cone_area_over_annulus():
    """Test 11: the cone over [r0, r1] has area L (r1^2 - r0^2) / 2"""
    spec = ConeSpec(p=1, q=2)
    r = np.linspace(0.5, 1.5, 41)
    s = np.linspace(0.0, spec.length, 2000, endpoint=False)
    immersion = get_cone_service().cone_immersion(spec, r, s, analytic=False, periodic=True)
    area = immersion_area(immersion.points, immersion.spacings, immersion.periodic)
    assert area == pytest.approx(0.5 * spec.length * (1.5 ** 2 - 0.5 ** 2), rel=1e-4)
    assert get_cone_service().ball_area(spec, 1.5) - get_cone_service().ball_area(spec, 0.5) == pytest.approx(
        0.5 * spec.length * 2.0, rel=1e-14)


# --- Gradient graphs under refinement ---

def test_12_d_sigma_h_vanishes_under_refinement():
    """Test 12: d(sigma_H) on the graph of grad(0.3 sin(x1 + 2 x2)) is a pure h^2 discretization error"""
    errors = []
    for nodes in (33, 65, 129):
        x = np.linspace(0.0, 1.0, nodes)
        cache = shape(gradient_graph_immersion(x, x, _wave))
        errors.append(float(np.max(np.abs(_central(cache.d_sigma_h, x)))))
    assert errors[-1] <= 1e-3
    assert observed_order(errors[0], errors[1]) >= 1.8
    assert observed_order(errors[1], errors[2]) >= 1.8


def test_13_sigma_h_is_minus_d_beta_on_graph():
    """Test 13: sigma_H against the closed-form gradient of the Lagrangian angle"""
    errors = []
    for nodes in (33, 65, 129):
        x = np.linspace(0.0, 1.0, nodes)
        cache = shape(gradient_graph_immersion(x, x, _wave))
        grid1, grid2 = np.meshgrid(x, x, indexing="ij")
        d_beta = _wave_angle_gradient(grid1, grid2)
        errors.append(max(
            float(np.max(np.abs(_central(cache.sigma_h.components[a] - SIGMA_H_SIGN * d_beta[a], x))))
            for a in range(2)
        ))
    assert errors[-1] <= 1e-2 * 3.0
    assert observed_order(errors[0], errors[1]) >= 1.8
    assert observed_order(errors[1], errors[2]) >= 1.8
