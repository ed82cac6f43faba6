# test_ambient.py
import numpy as np
import pytest

from services.ambient import (
    J_MATRIX,
    OMEGA_MATRIX,
    AmbientConventions,
    apply_j,
    eta,
    from_complex,
    metric,
    omega,
    pair,
    symbolic_d_eta,
    to_complex,
    unitary_to_real,
)


def _random_unitary(rng) -> np.ndarray:
    z = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


# --- Conventions ---

def test_01_compatible_triple():
    """Test 1: omega(v, Jw) = g(v, w), J is an isometry of omega and J^2 = -1"""
    defects = AmbientConventions().verify(n_random=200, seed=3)
    assert max(defects.values()) <= 1e-12


def test_02_d_eta_is_twice_omega():
    """Test 2: d(eta) - 2 omega vanishes symbolically"""
    assert all(entry == 0 for entry in symbolic_d_eta())


def test_03_basis_values():
    """Test 3: omega(dx1, dy1) = 1 and J(dx1) = dy1 in the (x1, y1, x2, y2) order"""
    e = np.eye(4)
    assert omega(e[0], e[1]) == 1.0
    assert omega(e[2], e[3]) == 1.0
    assert omega(e[0], e[2]) == 0.0
    assert np.array_equal(apply_j(e[0]), e[1])
    assert np.array_equal(apply_j(e[1]), -e[0])
    assert np.array_equal(J_MATRIX @ e[2], e[3])


def test_04_matrices_agree_with_functions(rng):
    """Test 4: the matrix forms give the same pairings as the vectorized functions"""
    v, w = rng.standard_normal((2, 50, 4))
    assert np.allclose(np.einsum("ni,ij,nj->n", v, OMEGA_MATRIX, w), omega(v, w), atol=1e-13)
    assert np.allclose(v @ J_MATRIX.T, apply_j(v), atol=0.0)


def test_05_pair_dispatch(rng):
    """Test 5: pair() selects omega, the metric or J"""
    v, w = rng.standard_normal((2, 4))
    assert pair(v, w, "omega") == pytest.approx(float(omega(v, w)))
    assert pair(v, w, "metric") == pytest.approx(float(v @ w))
    assert np.array_equal(pair(v, which="J-apply"), apply_j(v))
    with pytest.raises(ValueError):
        pair(v, w, "volume")


def test_06_eta_primitive(rng):
    """Test 6: eta_P(JP) = |P|^2 and eta_P(P) = 0"""
    points = rng.standard_normal((20, 4))
    assert np.allclose(eta(points, apply_j(points)), np.sum(points ** 2, axis=-1), atol=1e-12)
    assert np.allclose(eta(points, points), 0.0, atol=1e-12)


def test_07_complex_structure_is_multiplication_by_i(rng):
    """Test 7: J acts on (z1, z2) as multiplication by i"""
    points = rng.standard_normal((10, 4))
    assert np.allclose(to_complex(apply_j(points)), 1j * to_complex(points), atol=1e-14)
    assert np.allclose(from_complex(to_complex(points)), points, atol=0.0)


# --- Unitary invariance ---

def test_08_unitary_maps_commute_with_j(rng):
    """Test 8: real forms of U(2) commute with J and preserve omega and g"""
    for _ in range(10):
        real = unitary_to_real(_random_unitary(rng))
        assert np.allclose(real @ J_MATRIX, J_MATRIX @ real, atol=1e-13)
        assert np.allclose(real.T @ OMEGA_MATRIX @ real, OMEGA_MATRIX, atol=1e-13)
        assert np.allclose(real.T @ real, np.eye(4), atol=1e-13)


def test_09_unitary_real_form_matches_complex_action(rng):
    """Test 9: unitary_to_real(U) P corresponds to U z"""
    u = _random_unitary(rng)
    points = rng.standard_normal((5, 4))
    moved = points @ unitary_to_real(u).T
    assert np.allclose(to_complex(moved), to_complex(points) @ u.T, atol=1e-13)
    assert np.allclose(metric(moved, moved), metric(points, points), atol=1e-12)
