# test_graph_minimizer.py
import math

import numpy as np
import pytest

from models.graph import MinimizerConfig
from services.exceptions import DomainError
from services.graph_minimizer import (
    GraphField,
    area,
    area_gradient,
    biharmonic_extension,
    el_residual,
    excess_area,
    get_operators,
    graph_immersion,
    lagrangian_angle_field,
    linearized_operator,
    minimize,
    minimizer_diagnostics,
    stationarity_residual,
    window,
)
from services.immersion import shape

CELLS = 12


def _cubic(eps: float, cells: int = CELLS) -> GraphField:
    return GraphField.from_function(lambda x1, x2: eps * (x1 ** 3 - 3.0 * x1 * x2 ** 2), cells)


def _perturbed(field: GraphField, rng, scale: float) -> GraphField:
    values = field.values.copy()
    mask = field.free_mask()
    values[mask] += scale * rng.standard_normal(int(mask.sum()))
    return field.with_values(values)


# --- Functional ---

def test_01_quadratic_area_is_exact():
    """Test 1: constant Hessian [[a, b], [b, c]] gives area sqrt((1 - ac + b^2)^2 + (a + c)^2)"""
    a, b, c = 0.7, -0.3, 0.4
    field = GraphField.from_function(lambda x1, x2: 0.5 * (a * x1 ** 2 + 2 * b * x1 * x2 + c * x2 ** 2), CELLS)
    expected = math.hypot(1.0 - a * c + b * b, a + c)
    assert area(field) == pytest.approx(expected, rel=1e-13)
    assert excess_area(GraphField.from_function(lambda x1, x2: 2.0 * x1 - x2 + 1.0, CELLS)) == pytest.approx(0.0, abs=1e-15)


def test_02_gradient_matches_directional_derivatives(rng):
    """Test 2: the exact gradient against central differences in 20 random directions"""
    field = _perturbed(_cubic(0.3), rng, 1e-3)
    gradient = area_gradient(field)
    assert np.all(gradient[~field.free_mask()] == 0.0)
    step = 1e-6
    for _ in range(20):
        direction = np.where(field.free_mask(), rng.standard_normal(field.values.shape), 0.0)
        plus = excess_area(field.with_values(field.values + step * direction))
        minus = excess_area(field.with_values(field.values - step * direction))
        numeric = (plus - minus) / (2.0 * step)
        assert float(np.sum(gradient * direction)) == pytest.approx(numeric, rel=1e-6)


def test_03_linearization_at_zero(rng):
    """Test 3: excess area of a small field is half the quadratic form of the linearized operator"""
    field = GraphField(values=np.zeros((CELLS + 2, CELLS + 2)), h=1.0 / CELLS)
    small = _perturbed(field, rng, 1e-6)
    k = linearized_operator(small)
    v = small.values.ravel()
    assert excess_area(small) == pytest.approx(0.5 * float(v @ (k @ v)), rel=1e-6)


def test_04_field_validation():
    """Test 4: node grids must be square with at least 5 cells"""
    with pytest.raises(DomainError):
        GraphField(values=np.zeros((8, 9)), h=0.1)
    with pytest.raises(DomainError):
        GraphField(values=np.zeros((6, 6)), h=0.1)


# --- Special Lagrangian band ---

def test_05_harmonic_cubic_has_constant_angle():
    """Test 5: the graph of grad of a harmonic cubic is special Lagrangian on the grid"""
    beta, residual = lagrangian_angle_field(_cubic(0.3))
    assert np.max(np.abs(beta)) <= 1e-12
    assert np.max(np.abs(residual)) <= 1e-8


def test_06_discrete_graph_is_lagrangian(rng):
    """Test 6: the sampled graph keeps omega(e1, e2) at roundoff"""
    immersion = graph_immersion(_perturbed(_cubic(0.2), rng, 1e-3))
    leak = shape(immersion).lagrangian_leak[immersion.interior_mask()]
    assert np.max(leak) <= 1e-10


# --- Minimizer ---

def test_07_descent_from_noise(rng):
    """Test 7: minimizing a perturbed band converges with a nonincreasing area"""
    eps = 0.05
    target = biharmonic_extension(_cubic(eps))
    start = _perturbed(target, rng, 0.1 * eps * target.h ** 2)
    state = minimize(start)
    assert state.converged or state.roundoff_stall
    assert state.grad_norm <= 1e-6
    areas = [area(start)] + [step.area for step in state.history]
    assert all(b <= a + 1e-15 for a, b in zip(areas, areas[1:]))
    assert state.area <= area(target) + 1e-14
    assert np.max(np.abs(stationarity_residual(state.solution))) == pytest.approx(state.grad_norm, rel=1e-9)


def test_08_minimizer_approaches_biharmonic_extension():
    """Test 8: the minimizer departs from the biharmonic extension at third order in the amplitude"""
    deviations = []
    for eps in (0.1, 0.05):
        target = biharmonic_extension(_cubic(eps))
        state = minimize(target)
        deviations.append(float(np.max(np.abs(state.solution.values - target.values))))
    assert deviations[0] >= 4.0 * deviations[1]


def test_09_no_iterations():
    """Test 9: max_iter = 0 returns the start unchanged"""
    start = biharmonic_extension(_cubic(0.1))
    state = minimize(start, MinimizerConfig(max_iter=0))
    assert state.iterations == 0
    assert np.array_equal(state.solution.values, start.values)


def test_10_diagnostics_and_window():
    """Test 10: residual fields have the documented shapes and the window selects central cells"""
    state = minimize(biharmonic_extension(_cubic(0.1)))
    summary = minimizer_diagnostics(state)
    assert summary.cells == [CELLS, CELLS]
    assert summary.stationarity_residual == pytest.approx(state.grad_norm, rel=1e-9)
    residual = el_residual(state.solution)
    assert residual.shape == (CELLS - 4, CELLS - 4)
    everything = window(residual, state.solution, 3, 1.0)
    assert everything.size == residual.size
    central = window(residual, state.solution, 3, 0.25)
    assert 0 < central.size < residual.size


def _exponential_band(eps: float, cells: int) -> GraphField:
    return GraphField.from_function(lambda x1, x2: eps * x1 * np.exp(x1) * np.cos(x2), cells)


def _smooth_noise(field: GraphField, rng, amplitude: float) -> np.ndarray:
    """Seeded interior bump that vanishes with its slope on the band."""
    x1, x2 = field.mesh
    xi1, xi2 = ((x - 0.5 * field.h) / (1.0 - field.h) for x in (x1, x2))
    modes = [np.ones_like(xi1), np.cos(np.pi * xi1), np.cos(np.pi * xi2), np.cos(np.pi * xi1) * np.cos(np.pi * xi2)]
    noise = np.sin(np.pi * xi1) ** 2 * np.sin(np.pi * xi2) ** 2 * sum(
        c * mode for c, mode in zip(rng.standard_normal(len(modes)), modes))
    noise = np.where(field.free_mask(), noise, 0.0)
    return amplitude * noise / np.max(np.abs(noise))


# --- Line search resolution ---

def test_11_excess_change_matches_difference(rng):
    """Test 11: the incremental excess agrees with a difference of excesses and keeps tiny changes resolved"""
    field = _perturbed(_cubic(0.3), rng, 1e-3)
    ops = get_operators(field.n, field.h)
    hessian = ops.hessian(field.values)
    direction = np.where(field.free_mask(), rng.standard_normal(field.values.shape), 0.0)
    step = 1e-3 * direction
    change, scale = ops.excess_change(hessian, ops.hessian(step))
    assert change == pytest.approx(excess_area(field.with_values(field.values + step)) - excess_area(field), rel=1e-8)
    assert scale >= abs(change)

    descent = -area_gradient(field)
    tiny = 1e-11 * descent / np.max(np.abs(descent))
    change, _ = ops.excess_change(hessian, ops.hessian(tiny))
    assert change < 0.0
    assert change == pytest.approx(float(np.sum(area_gradient(field) * tiny)), rel=1e-6)


def test_12_descent_reaches_tolerance_on_fine_grid(rng):
    """Test 12: from h^2 noise on a 32-cell grid the descent converges instead of stalling"""
    target = biharmonic_extension(_exponential_band(0.05, 32))
    start = _perturbed(target, rng, 0.1 * 0.05 * target.h ** 2)
    state = minimize(start)
    assert state.converged and not state.roundoff_stall
    assert state.grad_norm <= 1e-9
    areas = [area(start)] + [step.area for step in state.history]
    assert all(b <= a for a, b in zip(areas, areas[1:]))


def test_13_quadratic_band_is_recovered(rng):
    """Test 13: quadratic band data plus smooth noise of size 1e-2 converges back to the quadratic"""
    quadratic = GraphField.from_function(lambda x1, x2: 0.1 * x1 ** 2 + 0.05 * x1 * x2 - 0.1 * x2 ** 2, CELLS)
    start = quadratic.with_values(quadratic.values + _smooth_noise(quadratic, rng, 1e-2))
    assert np.max(np.abs(start.values - quadratic.values)) == pytest.approx(1e-2)
    state = minimize(start)
    assert state.converged
    assert np.max(np.abs(state.solution.values - quadratic.values)) <= 1e-6


def test_14_refinement_orders_on_exponential_band():
    """Test 14: angle harmonicity and closedness of sigma_H improve at order >= 1.5 when the grid is halved"""
    angle, d_sigma = [], []
    for cells in (16, 32):
        target = biharmonic_extension(_exponential_band(0.05, cells))
        state = minimize(_perturbed(target, np.random.default_rng(7), 0.1 * 0.05 * target.h ** 2))
        u = state.solution
        angle.append(float(np.max(np.abs(window(lagrangian_angle_field(u)[1], u, 3, 0.25)))))
        d_sigma.append(float(np.max(np.abs(window(shape(graph_immersion(u)).d_sigma_h, u, 1, 0.25)))))
    assert angle[1] >= 1e-7
    assert math.log2(angle[0] / angle[1]) >= 1.5
    assert d_sigma[1] <= 1e-9 or math.log2(d_sigma[0] / d_sigma[1]) >= 1.5
