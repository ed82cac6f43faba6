# services/bessel.py
"""
Bessel function J0 on [0, 4] from its power series in x = sigma^2.

J0(sigma) = sum_k (-1)^k x^k / (4^k (k!)^2). Working in x keeps the kernel
derivative d/dtheta J0(sqrt(theta^2 - mu^2)) = 2 theta J0_x(theta^2 - mu^2)
regular at the light cone mu = +-theta.
"""
import logging
import math
from typing import Union

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import bisect

from services.exceptions import DomainError

logger = logging.getLogger(__name__)

SIGMA_MAX = 4.0
SERIES_TERMS = 30

ArrayLike = Union[float, np.ndarray]

_COEFFS = np.array([(-1.0) ** k / (4.0 ** k * math.factorial(k) ** 2) for k in range(SERIES_TERMS)])
_J0_X = Polynomial(_COEFFS)
_J0_X_PRIME = _J0_X.deriv(1)
_J0_X_SECOND = _J0_X.deriv(2)


def _check_sigma(sigma: ArrayLike) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0.0) or np.any(sigma > SIGMA_MAX):
        raise DomainError(f"The J0 series is certified on 0 <= sigma <= {SIGMA_MAX}")
    return sigma


def _check_x(x: ArrayLike) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-14) or np.any(x > SIGMA_MAX ** 2):
        raise DomainError(f"The J0 series is certified on 0 <= x <= {SIGMA_MAX ** 2}")
    return np.maximum(x, 0.0)


def truncation_bound(sigma_max: float = SIGMA_MAX, terms: int = SERIES_TERMS) -> float:
    """Bound on the dropped tail of the series for sigma <= sigma_max (geometric majorant)."""
    x = sigma_max ** 2
    first = x ** terms / (4.0 ** terms * math.factorial(terms) ** 2)
    ratio = x / (4.0 * (terms + 1) ** 2)
    return first / (1.0 - ratio)


def bessel_j0(sigma: ArrayLike) -> np.ndarray:
    sigma = _check_sigma(sigma)
    return _J0_X(sigma * sigma)


def bessel_j0_x(x: ArrayLike) -> np.ndarray:
    """dJ0/dx as a function of x = sigma^2."""
    return _J0_X_PRIME(_check_x(x))


def bessel_j0_prime(sigma: ArrayLike) -> np.ndarray:
    sigma = _check_sigma(sigma)
    return 2.0 * sigma * _J0_X_PRIME(sigma * sigma)


def bessel_j0_second(sigma: ArrayLike) -> np.ndarray:
    sigma = _check_sigma(sigma)
    x = sigma * sigma
    return 2.0 * _J0_X_PRIME(x) + 4.0 * x * _J0_X_SECOND(x)


def riemann_kernel(theta: ArrayLike, mu: ArrayLike) -> np.ndarray:
    """J0(sqrt(theta^2 - mu^2)) for |mu| <= |theta|."""
    theta, mu = np.asarray(theta, dtype=float), np.asarray(mu, dtype=float)
    return _J0_X(_check_x(theta * theta - mu * mu))


def riemann_kernel_theta(theta: ArrayLike, mu: ArrayLike) -> np.ndarray:
    """d/dtheta J0(sqrt(theta^2 - mu^2)) = 2 theta J0_x(theta^2 - mu^2)."""
    theta, mu = np.asarray(theta, dtype=float), np.asarray(mu, dtype=float)
    return 2.0 * theta * bessel_j0_x(theta * theta - mu * mu)


def bessel_first_zero(lo: float = 2.0, hi: float = 3.0, xtol: float = 1e-14) -> float:
    zero = bisect(lambda s: float(bessel_j0(s)), lo, hi, xtol=xtol)
    logger.debug(f"First zero of J0 at {zero:.15f}")
    return float(zero)
