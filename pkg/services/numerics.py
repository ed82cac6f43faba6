# services/numerics.py
"""
Finite differences and composite quadrature on uniform grids.

Derivatives are central differences of order h^2 in the interior and
second-order one-sided stencils on non-periodic boundaries. Integrals use
composite Simpson on open axes and the trapezoid rule (spectrally accurate)
on periodic axes. All reductions run in a fixed order.
"""
from typing import Sequence, Tuple

import numpy as np
from scipy.integrate import simpson


def first_derivative(values: np.ndarray, spacing: float, axis: int = 0, periodic: bool = False) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if periodic:
        return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * spacing)
    return np.gradient(values, spacing, axis=axis, edge_order=2)


def second_derivative(values: np.ndarray, spacing: float, axis: int = 0, periodic: bool = False) -> np.ndarray:
    moved = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    h2 = spacing * spacing
    if periodic:
        out = (np.roll(moved, -1, axis=0) - 2.0 * moved + np.roll(moved, 1, axis=0)) / h2
    else:
        if moved.shape[0] < 4:
            raise ValueError("second_derivative needs at least 4 samples along a non-periodic axis")
        out = np.empty_like(moved)
        out[1:-1] = (moved[2:] - 2.0 * moved[1:-1] + moved[:-2]) / h2
        out[0] = (2.0 * moved[0] - 5.0 * moved[1] + 4.0 * moved[2] - moved[3]) / h2
        out[-1] = (2.0 * moved[-1] - 5.0 * moved[-2] + 4.0 * moved[-3] - moved[-4]) / h2
    return np.moveaxis(out, 0, axis)


def mixed_derivative(values: np.ndarray, spacings: Sequence[float], axes: Tuple[int, int] = (0, 1),
                     periodic: Tuple[bool, bool] = (False, False)) -> np.ndarray:
    inner = first_derivative(values, spacings[0], axis=axes[0], periodic=periodic[0])
    return first_derivative(inner, spacings[1], axis=axes[1], periodic=periodic[1])


def integrate_axis(values: np.ndarray, spacing: float, axis: int = 0, periodic: bool = False) -> np.ndarray:
    """Integrate along one axis. Periodic samples exclude the duplicated endpoint."""
    values = np.asarray(values, dtype=float)
    if periodic:
        return np.sum(values, axis=axis) * spacing
    return simpson(values, dx=spacing, axis=axis)


def integrate_grid(values: np.ndarray, spacings: Sequence[float],
                   periodic: Tuple[bool, bool] = (False, False)) -> float:
    """Integrate a 2-D grid function, second axis first."""
    inner = integrate_axis(values, spacings[1], axis=1, periodic=periodic[1])
    return float(integrate_axis(inner, spacings[0], axis=0, periodic=periodic[0]))


def simpson_with_error(values: np.ndarray, spacing: float) -> Tuple[float, float]:
    """
    Composite Simpson value and a Richardson error estimate |S_h - S_2h| / 15.

    Args:
        values: samples on a uniform grid with an odd number of nodes
        spacing: grid spacing

    Returns:
        (integral, error estimate)
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 5 or n % 2 == 0:
        raise ValueError(f"simpson_with_error needs an odd number of at least 5 nodes, got {n}")
    fine = float(simpson(values, dx=spacing))
    coarse = float(simpson(values[::2], dx=2.0 * spacing))
    return fine, abs(fine - coarse) / 15.0


def observed_order(coarse_error: float, fine_error: float, ratio: float = 2.0) -> float:
    """Convergence order from errors measured at spacings h and h/ratio."""
    return float(np.log(coarse_error / fine_error) / np.log(ratio))
