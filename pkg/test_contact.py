# test_contact.py
import dataclasses
import math

import numpy as np
import pytest

from models.cone import ConeSpec
from services.contact import (
    HeisenbergPoint,
    KernelLookup,
    cone_density_study,
    contact_field,
    density_ratio,
    heisenberg_coordinates,
    legendrian_defect,
    lie_check,
    tangential_identities,
)
from services.exceptions import DomainError, SupportViolationError
from services.immersion import gradient_graph_immersion, plane_immersion

Z0 = np.array([0.3, -0.2, 0.5, 0.1, 0.2])


def _cubic_graph(nodes: int):
    axis = np.linspace(0.5, 1.5, nodes)
    potential = lambda a, b: (0.1 * a ** 3 + 0.2 * a * b ** 2 - 0.15 * b ** 3,
                              0.3 * a ** 2 + 0.2 * b ** 2, 0.4 * a * b - 0.45 * b ** 2)
    return gradient_graph_immersion(axis, axis, potential)


# --- Coordinates ---

def test_01_heisenberg_point():
    """Test 1: s, s~, t, theta and r0 of simple points"""
    point = HeisenbergPoint.from_points(np.array([1.0, 0.0, 1.0, 0.0]))
    assert point.s == pytest.approx(1.0)
    assert point.t == pytest.approx(0.0)
    assert point.theta == pytest.approx(0.0)
    assert point.r0 == pytest.approx(math.sqrt(2.0))
    lifted = HeisenbergPoint.from_points(np.array([1.0, 0.0, 1.0, 0.0]), phi=1.0)
    assert lifted.s_tilde == pytest.approx(math.sqrt(2.0))
    assert lifted.theta == pytest.approx(0.25 * math.pi)


def test_02_vectorized_coordinates(rng):
    """Test 2: heisenberg_coordinates agrees with the point model"""
    points = rng.standard_normal((5, 4))
    phi = rng.standard_normal(5)
    coords = heisenberg_coordinates(points, phi)
    for i in range(5):
        point = HeisenbergPoint.from_points(points[i], phi=float(phi[i]))
        assert coords["t"][i] == pytest.approx(point.t, rel=1e-14, abs=1e-14)
        assert coords["theta"][i] == pytest.approx(point.theta, rel=1e-14, abs=1e-14)
        assert coords["r0"][i] == pytest.approx(point.r0, rel=1e-14)


# --- Contact vector fields ---

def test_03_field_of_phi():
    """Test 3: h = phi generates the dilation -(P, 2 phi)"""
    field = contact_field("phi")
    assert np.allclose(field(Z0), -np.array([0.3, -0.2, 0.5, 0.1, 0.4]), atol=1e-15)


@pytest.mark.parametrize("h", ["x1*y1 + phi*x2", "phi**2 + x1**2", "sin(x1)*phi + y2", "exp(-x2**2)*(1 + phi)"])
def test_04_lie_derivative_of_contact_form(h):
    """Test 4: the flow rescales the contact form by -2 h_phi"""
    report = lie_check(h, Z0)
    assert report.defect <= 1e-5
    assert report.expression


def test_05_nonsmooth_functions_are_refused():
    """Test 5: Abs and foreign symbols raise"""
    with pytest.raises(DomainError):
        contact_field("Abs(x1) + phi")
    with pytest.raises(DomainError):
        contact_field("x1 + w")
    with pytest.raises(DomainError):
        lie_check("phi", Z0, tau=1e-4, step=1e-3)


# --- Tangential identities ---

def test_06_identities_converge():
    """Test 6: identity residuals on a lifted cubic graph shrink at second order"""
    coarse, fine = tangential_identities(_cubic_graph(41)), tangential_identities(_cubic_graph(81))
    for name in ("divergence_theta", "divergence_t", "gradient_sum"):
        assert getattr(fine, name) <= 5e-3, name
        assert getattr(coarse, name) >= 3.0 * getattr(fine, name), name
    assert fine.legendrian_defect <= 1e-3


def test_07_quadratic_lift_is_exact():
    """Test 7: on a quadratic graph the sampled lift satisfies d(phi) = eta"""
    axis = np.linspace(0.5, 1.5, 21)
    immersion = gradient_graph_immersion(axis, axis, lambda a, b: (0.3 * a * a - 0.2 * b * b, 0.6 * a, -0.4 * b))
    assert legendrian_defect(immersion) <= 1e-12


def test_08_surface_through_the_origin():
    """Test 8: the identities need s > 0"""
    axis = np.linspace(-1.0, 1.0, 21)
    with pytest.raises(SupportViolationError):
        tangential_identities(plane_immersion(axis, axis))


# --- Density ratio ---

def test_09_lookup_branches(kernel_tables):
    """Test 9: the lookup interpolates the table and extends it exactly"""
    lookup = KernelLookup(kernel_tables)
    t_low = kernel_tables.t[0] - 5.0
    assert lookup.scaled(np.array([t_low]), np.zeros(1))[0] == pytest.approx(0.5 * kernel_tables.cutoff.lam * math.exp(t_low))
    assert lookup.scaled(np.array([kernel_tables.t[-1] + 1.0]), np.zeros(1))[0] == 0.0
    i, j = 150, 20
    node = lookup.scaled(kernel_tables.t[i:i + 1], kernel_tables.theta[j:j + 1])[0]
    assert node == pytest.approx(kernel_tables.scaled_F[i, j], rel=1e-10, abs=1e-12)


def test_10_lookup_needs_the_far_left(kernel_tables):
    """Test 10: a truncated table cannot be extended to the left"""
    cut = 200
    truncated = dataclasses.replace(
        kernel_tables, t=kernel_tables.t[cut:], eta=kernel_tables.eta[cut:], eta_t=kernel_tables.eta_t[cut:],
        scaled_F=kernel_tables.scaled_F[cut:], G=kernel_tables.G[cut:],
        scaled_F_from_eta=None, G_from_eta=None,
    )
    lookup = KernelLookup(truncated)
    assert not lookup.far_left_ok
    with pytest.raises(SupportViolationError):
        lookup.scaled(kernel_tables.t[:1], np.zeros(1))


@pytest.mark.parametrize("p, q", [(1, 1), (1, 2), (2, 3)])
def test_11_cone_density(p, q, kernel_tables):
    """Test 11: the kernel-weighted density of a cone is k sqrt(pq) at every radius"""
    spec = ConeSpec(p=p, q=q)
    records = cone_density_study(spec, [0.5, 1.0], kernel_tables)
    for record in records:
        assert record.ratio == pytest.approx(spec.density, abs=1e-3)
        assert record.extra["expected"] == spec.density


def test_12_radius_must_be_positive(kernel_tables):
    """Test 12: a <= 0 is refused"""
    axis = np.linspace(0.5, 1.5, 11)
    with pytest.raises(DomainError):
        density_ratio(plane_immersion(axis, axis), 0.0, kernel_tables)
