# test_cone_catalog.py
import math

import numpy as np
import pytest
from pydantic import ValidationError

from models.cone import ConeSpec
from services.ambient import apply_j, from_complex, metric
from services.cone_catalog import cone_curve, get_cone_service
from services.exceptions import DomainError

service = get_cone_service()


# --- Catalog ---

def test_01_catalog_cones_validate():
    """Test 1: every cone with p + q <= 8 and k <= 2 passes validation with the expected winding"""
    catalog = service.catalog(8, k_max=2)
    assert catalog
    for (p, q, k), spec in catalog.items():
        report = service.validate_cone(service.make_cone(spec))
        assert report.max_defect <= 1e-10, (p, q, k, report.max_defect)
        assert report.maslov_winding == p - q
        assert report.passed


def test_02_catalog_lists_coprime_pairs_in_both_orders():
    """Test 2: p + q <= 5 gives nine coprime pairs"""
    catalog = service.catalog(5, k_max=1)
    assert len(catalog) == 9
    assert (2, 1, 1) in catalog and (1, 2, 1) in catalog
    assert (2, 2, 1) not in catalog


def test_03_non_coprime_pairs_are_rejected():
    """Test 3: (2, 4) is not a cone of the family"""
    with pytest.raises(ValidationError):
        ConeSpec(p=2, q=4)
    with pytest.raises(ValidationError):
        ConeSpec(p=1, q=2, k=0)


def test_04_descriptor_values():
    """Test 4: slope, length, density and knot flag"""
    descriptor = ConeSpec(p=2, q=3, k=2).descriptor()
    assert descriptor.a == pytest.approx(-1.0 / (2.0 * math.sqrt(6.0)), abs=1e-15)
    assert descriptor.length == pytest.approx(4.0 * math.pi * math.sqrt(6.0), rel=1e-15)
    assert descriptor.density == pytest.approx(2.0 * math.sqrt(6.0), rel=1e-15)
    assert descriptor.maslov == -1
    assert descriptor.knotted
    assert not ConeSpec(p=1, q=4).knotted


@pytest.mark.parametrize("p, q", [(1, 1), (1, 2), (2, 1), (1, 3), (2, 5), (3, 4)])
def test_05_maslov_index(p, q):
    """Test 5: tracked winding of the Lagrangian angle equals p - q"""
    assert service.cone_maslov_index(ConeSpec(p=p, q=q)) == p - q


# --- Validation defects ---

def test_06_perturbed_link_fails_validation():
    """Test 6: a link pushed off the sphere is reported, not raised"""
    link = service.make_cone(ConeSpec(p=1, q=2))
    link.curve.points = link.curve.points * (1.0 + 1e-6)
    report = service.validate_cone(link)
    assert report.unit_norm == pytest.approx(1e-6, rel=1e-6)
    assert not report.passed


def test_07_too_few_samples():
    """Test 7: make_cone refuses coarse samplings"""
    with pytest.raises(DomainError):
        service.make_cone(ConeSpec(p=1, q=2), n_samples=8)


# --- Closed-form geometry ---

@pytest.mark.parametrize("p, q", [(1, 2), (2, 3), (3, 1)])
def test_08_mean_curvature_closed_form(p, q):
    """Test 8: H is normal, |H| = |q - p| / (sqrt(pq) r) and JH = sigma_H(d/ds) gamma' / r"""
    spec = ConeSpec(p=p, q=q)
    s = np.linspace(0.0, spec.length, 200)
    r = np.array([0.5, 1.0, 2.0])[:, None]
    cone = service.cone_shape(spec, r, s[None, :])
    gamma, velocity, _ = cone_curve(spec, s)
    gamma, velocity = from_complex(gamma), from_complex(velocity)

    assert np.max(np.abs(metric(cone.H, gamma[None]))) <= 1e-14
    assert np.max(np.abs(metric(cone.H, velocity[None]))) <= 1e-14
    expected = abs(q - p) / (math.sqrt(p * q) * r)
    assert np.max(np.abs(np.linalg.norm(cone.H, axis=-1) - expected)) <= 1e-13
    assert np.max(np.abs(apply_j(cone.H) - cone.JH)) <= 1e-13
    assert service.sigma_h_on_cone(spec) == pytest.approx((q - p) / math.sqrt(p * q), rel=1e-15)


def test_09_vertex_is_excluded():
    """Test 9: cone_shape is undefined at r = 0"""
    with pytest.raises(DomainError):
        service.cone_shape(ConeSpec(p=1, q=2), np.array([0.0, 1.0]), np.array([0.0, 1.0]))


def test_10_ball_area():
    """Test 10: the (1, 1) cone is a plane, its unit disc has area pi"""
    assert service.ball_area(ConeSpec(p=1, q=1), 1.0) == pytest.approx(math.pi, rel=1e-15)
    spec = ConeSpec(p=1, q=2, k=3)
    assert service.ball_area(spec, 2.0) == pytest.approx(4.0 * service.ball_area(spec, 1.0), rel=1e-15)
    with pytest.raises(DomainError):
        service.ball_area(spec, 0.0)
