# test_curves.py
import math

import numpy as np
import pytest

from models.cone import ConeSpec
from services.cone_catalog import get_cone_service
from services.curves import (
    SampledCurve,
    curve_lagrangian_angle,
    frame_lagrangian_angle,
    lift,
    lift_and_period,
    maslov_winding,
    track_branch,
)
from services.exceptions import (
    BranchTrackingError,
    DomainError,
    NonLagrangianError,
    NotClosedCurveError,
)


def _circle(n: int = 1000) -> SampledCurve:
    s = np.linspace(0.0, 2.0 * math.pi, n + 1)
    zeros = np.zeros_like(s)
    points = np.stack([np.cos(s), np.sin(s), zeros, zeros], axis=-1)
    velocity = np.stack([-np.sin(s), np.cos(s), zeros, zeros], axis=-1)
    points[-1] = points[0]
    return SampledCurve(s=s, points=points, closed=True, velocity=velocity, unit_speed=True)


# --- Period and lift ---

def test_01_circle_period_is_twice_the_area():
    """Test 1: the unit circle in the (x1, y1)-plane has period 2 pi"""
    _, period, exact = lift_and_period(_circle())
    assert period == pytest.approx(2.0 * math.pi, abs=1e-9)
    assert not exact


def test_02_legendrian_link_is_exact():
    """Test 2: a cone link is Legendrian, so its lift closes up"""
    link = get_cone_service().make_cone(ConeSpec(p=1, q=2))
    phi, period, exact = lift_and_period(link.curve)
    assert exact
    assert np.max(np.abs(phi)) <= 1e-10


def test_03_lift_needs_samples():
    """Test 3: lifts of very short samples are refused"""
    s = np.linspace(0.0, 1.0, 5)
    points = np.stack([s, np.zeros_like(s), np.zeros_like(s), np.zeros_like(s)], axis=-1)
    with pytest.raises(DomainError):
        lift(SampledCurve(s=s, points=points))


def test_04_open_curves_have_no_period():
    """Test 4: the period of an open curve is an error"""
    s = np.linspace(0.0, 1.0, 11)
    points = np.stack([s, s ** 2, np.zeros_like(s), np.zeros_like(s)], axis=-1)
    with pytest.raises(NotClosedCurveError):
        lift_and_period(SampledCurve(s=s, points=points))


def test_05_closed_flag_checks_endpoints():
    """Test 5: declaring a curve closed with distinct endpoints fails"""
    s = np.linspace(0.0, 1.0, 11)
    points = np.stack([s, np.zeros_like(s), np.zeros_like(s), np.zeros_like(s)], axis=-1)
    with pytest.raises(NotClosedCurveError):
        SampledCurve(s=s, points=points, closed=True)


def test_06_samples_must_be_finite():
    """Test 6: NaN samples are rejected"""
    s = np.linspace(0.0, 1.0, 11)
    points = np.zeros((11, 4))
    points[3, 0] = np.nan
    with pytest.raises(DomainError):
        SampledCurve(s=s, points=points)


# --- Lagrangian angle ---

def test_07_non_lagrangian_frame():
    """Test 7: the (dx1, dy1) plane is symplectic, not Lagrangian"""
    frames = np.zeros((3, 4, 2))
    frames[:, 0, 0] = 1.0
    frames[:, 1, 1] = 1.0
    with pytest.raises(NonLagrangianError):
        frame_lagrangian_angle(frames)


def test_08_rotated_lagrangian_planes():
    """Test 8: the plane spanned by e^(i t) dx1 and dx2 has angle t"""
    t = np.linspace(0.0, 1.0, 11)
    frames = np.zeros((11, 4, 2))
    frames[:, 0, 0] = np.cos(t)
    frames[:, 1, 0] = np.sin(t)
    frames[:, 2, 1] = 1.0
    beta = frame_lagrangian_angle(frames)
    assert np.allclose(beta, t, atol=1e-14)


def test_09_branch_jumps_are_reported():
    """Test 9: a jump above pi/2 between samples needs refinement"""
    with pytest.raises(BranchTrackingError):
        track_branch(np.array([0.0, 0.1, 2.0]))
    assert np.allclose(track_branch(np.array([3.0, -3.0])), [3.0, 2.0 * math.pi - 3.0])


def test_10_winding_numbers():
    """Test 10: winding of a linear angle and of cone links"""
    assert maslov_winding(np.linspace(0.0, 4.0 * math.pi, 50)).winding == 2
    service = get_cone_service()
    for p, q in [(1, 2), (1, 3), (2, 5)]:
        link = service.make_cone(ConeSpec(p=p, q=q))
        assert maslov_winding(curve_lagrangian_angle(link.curve)).winding == p - q


def test_11_reversal_flips_the_winding():
    """Test 11: traversing the link backwards negates the Maslov winding"""
    link = get_cone_service().make_cone(ConeSpec(p=1, q=3))
    reversed_curve = link.curve.reversed()
    assert maslov_winding(curve_lagrangian_angle(reversed_curve)).winding == 2


def test_12_speed_defect():
    """Test 12: analytic velocities of the circle have unit speed"""
    assert _circle().speed_defect() <= 1e-14
