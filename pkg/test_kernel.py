# test_kernel.py
import dataclasses
import math

import numpy as np
import pytest

from services.exceptions import PathDisagreementError, TripwireError
from services.kernel import (
    certify_kernel_bounds,
    compute_F_G,
    companion_initial_defect,
    cosine_identity,
    default_grid,
    load_tables,
    path_deviations,
    save_tables,
    shift_scan,
    wave_report,
    wave_residual,
)


@pytest.fixture(scope="module")
def report(kernel_tables, cutoff):
    return wave_report(kernel_tables, cutoff)


# --- Building blocks ---

def test_01_residual_stencil_is_exact_on_quadratics():
    """Test 1: u = t - theta^2 solves the equation and the stencils see it exactly"""
    t, theta = np.linspace(-2.0, 1.0, 31), np.linspace(-1.0, 1.0, 21)
    u = t[:, None] - theta[None, :] ** 2
    spacings = (t[1] - t[0], theta[1] - theta[0])
    assert np.max(np.abs(wave_residual(u, spacings))) <= 1e-9


def test_02_shift_scan():
    """Test 2: smallest shift after which G never increases"""
    assert shift_scan(np.array([1.0, 0.8, 0.5, 0.1]), 0.0) == 1
    assert shift_scan(np.array([1.0, 0.9, 0.95, 0.5]), 0.0) == 2
    assert shift_scan(np.array([1.0, 0.9, 0.95, 0.5]), 0.1) == 1


def test_03_cosine_identity():
    """Test 3: cos(theta) - 1 = 1/2 integral of the theta-derivative of the kernel"""
    assert cosine_identity(np.linspace(-0.5 * math.pi, 0.5 * math.pi, 41)) <= 1e-8


def test_04_default_grid():
    """Test 4: t in [-3c, 3], theta in [-pi/2, pi/2]"""
    t, theta = default_grid(31.0, 11, 5)
    assert t[0] == pytest.approx(-93.0) and t[-1] == pytest.approx(3.0)
    assert theta[0] == pytest.approx(-0.5 * math.pi) and theta[-1] == pytest.approx(0.5 * math.pi)


# --- Tables ---

def test_05_tables_shape(kernel_tables):
    """Test 5: every table lives on the (t, theta) grid and eta is odd in theta"""
    shape = (kernel_tables.t.shape[0], kernel_tables.theta.shape[0])
    for name in ("eta", "eta_t", "scaled_F", "G", "scaled_F_from_eta", "G_from_eta"):
        assert getattr(kernel_tables, name).shape == shape
    assert np.max(np.abs(kernel_tables.eta + kernel_tables.eta[:, ::-1])) <= 1e-12


def test_06_wave_equation(report):
    """Test 6: eta and 1 - G solve the damped wave equation up to the grid error"""
    assert report.wave_residual <= 1e-2
    assert report.companion_residual <= 1e-2


def test_07_paths_agree(kernel_tables, report):
    """Test 7: explicit F, G formulas match the eta-derivative path"""
    assert max(path_deviations(kernel_tables)) <= 1e-4
    F, G = compute_F_G(kernel_tables)
    assert F.shape == G.shape == kernel_tables.eta.shape
    assert report.path_deviation_F <= 1e-4 and report.path_deviation_G <= 1e-4


def test_08_path_disagreement_raises(kernel_tables):
    """Test 8: a corrupted second path is caught"""
    broken = dataclasses.replace(kernel_tables, G_from_eta=kernel_tables.G + 0.01)
    with pytest.raises(PathDisagreementError) as info:
        compute_F_G(broken)
    assert info.value.diagnostics["G"] > 1e-4


def test_09_closed_form_regimes(report):
    """Test 9: far-left and far-right closed forms"""
    assert report.far_left_eta <= 1e-6
    assert report.far_left_F <= 1e-6
    assert report.far_left_G <= 1e-6
    assert report.far_right <= 1e-6


def test_10_normalization_and_initial_data(report):
    """Test 10: normalization of psi and the initial slope eta_theta(t, 0) = zeta(t)"""
    assert report.normalization <= 1e-8
    assert report.initial_data <= 1e-5
    assert report.cosine_identity <= 1e-8


def test_11_bounds(kernel_tables, report):
    """Test 11: F >= 0, 0 <= G <= 1 and a shift constant in (0, 1)"""
    bounds = certify_kernel_bounds(kernel_tables, wave=report, strict=False)
    assert bounds.passed, bounds.failures
    assert 0.0 < bounds.theta0 < 1.0
    assert bounds.g_max <= 1.0 + bounds.tolerance


def test_12_bounds_tripwire(kernel_tables):
    """Test 12: a table with G above 1 trips the strict check"""
    broken = dataclasses.replace(kernel_tables, G=kernel_tables.G + 0.5)
    with pytest.raises(TripwireError):
        certify_kernel_bounds(broken)
    assert not certify_kernel_bounds(broken, strict=False).passed


def test_13_save_and_load(kernel_tables, tmp_path):
    """Test 13: tables survive the npz/header round trip and the CSV is long-format"""
    paths = save_tables(kernel_tables, tmp_path)
    assert [p.name for p in paths] == ["kernel.npz", "kernel.csv", "kernel_header.json"]
    loaded = load_tables(tmp_path)
    assert np.array_equal(loaded.G, kernel_tables.G)
    assert np.array_equal(loaded.scaled_F, kernel_tables.scaled_F)
    assert loaded.header() == kernel_tables.header()
    lines = (tmp_path / "kernel.csv").read_text().splitlines()
    assert lines[0] == "t,theta,F,G"
    assert len(lines) == 1 + kernel_tables.eta.size


def test_14_companion_initial_data(kernel_tables, cutoff, report):
    """Test 14: e^-t (1 - G) starts from e^-t alpha(2 t0 - t) with zero theta-derivative"""
    assert report.companion_initial <= 1e-6
    assert companion_initial_defect(cutoff, kernel_tables.t[::10], step=5e-3) <= 1e-6
    middle = kernel_tables.theta.shape[0] // 2
    assert abs(kernel_tables.theta[middle]) <= 1e-12
    reflected = cutoff.alpha(2.0 * cutoff.t0 - kernel_tables.t)
    assert np.max(np.abs(1.0 - kernel_tables.G[:, middle] - reflected)) <= 1e-10
