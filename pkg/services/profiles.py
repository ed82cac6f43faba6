# services/profiles.py
"""
Radial profiles for the cone second-variation forms.

RadialProfile samples zeta on a uniform r grid. LogRadialProfile samples
rho = zeta / r on a piecewise-uniform grid in t = log r, which keeps
multi-scale profiles resolved for arbitrarily small inner scales: every
quantity is stored in scale-free form and r itself is never formed.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple
import hashlib
import logging

import numpy as np
from numpy.polynomial import Polynomial

from services.exceptions import DomainError, SupportViolationError
from services.numerics import simpson_with_error

logger = logging.getLogger(__name__)

SUPPORT_TOL = 1e-10
BUMP_POWER = 6


def _segments(breaks: Sequence[int]) -> List[Tuple[int, int]]:
    return [(int(breaks[i]), int(breaks[i + 1])) for i in range(len(breaks) - 1)]


def _spacing(grid: np.ndarray, lo: int, hi: int) -> float:
    return float(grid[hi] - grid[lo]) / (hi - lo)


def _check_segments(grid: np.ndarray, breaks: Sequence[int], name: str):
    for lo, hi in _segments(breaks):
        piece = grid[lo:hi + 1]
        nodes = piece.shape[0]
        if nodes < 5 or nodes % 2 == 0:
            raise DomainError(f"{name} segment [{lo}, {hi}] needs an odd number of at least 5 nodes")
        steps = np.diff(piece)
        if np.max(np.abs(steps - steps[0])) > 1e-6 * abs(steps[0]):
            raise DomainError(f"{name} segment [{lo}, {hi}] is not uniform")


def _integrate_segments(grid: np.ndarray, breaks: Sequence[int], integrand: np.ndarray) -> Tuple[float, float]:
    total, error = 0.0, 0.0
    for lo, hi in _segments(breaks):
        value, err = simpson_with_error(integrand[lo:hi + 1], _spacing(grid, lo, hi))
        total += value
        error += err
    return total, error


@dataclass
class RadialProfile:
    """zeta(r) with first and second derivatives on a uniform r grid."""
    r: np.ndarray
    zeta: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    breaks: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.zeta, self.d1, self.d2 = (np.asarray(a, dtype=float) for a in (self.zeta, self.d1, self.d2))
        if self.r[0] < 0:
            raise DomainError("Radial profiles live on r >= 0")
        if self.breaks is None:
            self.breaks = (0, self.r.shape[0] - 1)
        _check_segments(self.r, self.breaks, "Radial profile")
        scale = max(1.0, float(np.max(np.abs(self.zeta))))
        for end in (0, -1):
            if abs(self.zeta[end]) > SUPPORT_TOL * scale or abs(self.d1[end]) > SUPPORT_TOL * scale:
                raise SupportViolationError(f"Profile must vanish with its derivative at r = {self.r[end]:.6g}")

    @property
    def reaches_vertex(self) -> bool:
        return self.r[0] == 0.0

    def scaled_terms(self, m: float) -> Tuple[np.ndarray, np.ndarray]:
        """(r A, zeta / r) where A = zeta'' + zeta'/r - m zeta / r^2; zero at the vertex."""
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(self.r > 0, self.zeta / self.r, 0.0)
        r_a = self.r * self.d2 + self.d1 - m * ratio
        if self.reaches_vertex:
            r_a[0] = 0.0
        return r_a, ratio

    def integrate(self, integrand_dr: np.ndarray) -> Tuple[float, float]:
        return _integrate_segments(self.r, self.breaks, integrand_dr)

    def scaled(self, factor: float) -> "RadialProfile":
        return RadialProfile(self.r, factor * self.zeta, factor * self.d1, factor * self.d2, self.breaks)

    def digest(self) -> str:
        return hashlib.sha256(self.r.tobytes() + self.zeta.tobytes()).hexdigest()


@dataclass
class LogRadialProfile:
    """
    rho(t) = zeta(e^t) / e^t with t-derivatives on a piecewise-uniform t grid.

    breaks lists the node indices that delimit the uniform segments.
    """
    t: np.ndarray
    rho: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    breaks: Optional[Tuple[int, ...]] = None
    labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.rho, self.d1, self.d2 = (np.asarray(a, dtype=float) for a in (self.rho, self.d1, self.d2))
        if self.breaks is None:
            self.breaks = (0, self.t.shape[0] - 1)
        _check_segments(self.t, self.breaks, "Log profile")
        scale = max(1.0, float(np.max(np.abs(self.rho))))
        for end in (0, -1):
            if abs(self.rho[end]) > SUPPORT_TOL * scale or abs(self.d1[end]) > SUPPORT_TOL * scale:
                raise SupportViolationError(f"Profile must vanish with its derivative at t = {self.t[end]:.6g}")

    def scaled_terms(self, m: float) -> Tuple[np.ndarray, np.ndarray]:
        """(r A, zeta / r) in terms of rho: r A = rho'' + 2 rho' + (1 - m) rho."""
        return self.d2 + 2.0 * self.d1 + (1.0 - m) * self.rho, self.rho

    def integrate(self, integrand_dt: np.ndarray) -> Tuple[float, float]:
        return _integrate_segments(self.t, self.breaks, integrand_dt)

    def segment_integrals(self, integrand_dt: np.ndarray) -> List[float]:
        return [simpson_with_error(integrand_dt[lo:hi + 1], _spacing(self.t, lo, hi))[0]
                for lo, hi in _segments(self.breaks)]

    def scaled(self, factor: float) -> "LogRadialProfile":
        return LogRadialProfile(self.t, factor * self.rho, factor * self.d1, factor * self.d2,
                                self.breaks, self.labels)

    def digest(self) -> str:
        return hashlib.sha256(self.t.tobytes() + self.rho.tobytes()).hexdigest()


# --- Polynomial bumps ---

_BUMP = Polynomial([1.0, 0.0, -1.0]) ** BUMP_POWER


@dataclass
class BumpSum:
    """Sum of c_j (1 - x_j^2)^6, x_j = (t - m_j) / w_j, as a smooth compactly supported function."""
    centers: np.ndarray
    widths: np.ndarray
    weights: np.ndarray

    def __call__(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        value, first, second = np.zeros_like(t), np.zeros_like(t), np.zeros_like(t)
        d1, d2 = _BUMP.deriv(1), _BUMP.deriv(2)
        for center, width, weight in zip(self.centers, self.widths, self.weights):
            x = (t - center) / width
            inside = np.abs(x) < 1.0
            value += np.where(inside, weight * _BUMP(x), 0.0)
            first += np.where(inside, weight * d1(x) / width, 0.0)
            second += np.where(inside, weight * d2(x) / width ** 2, 0.0)
        return value, first, second

    @property
    def support(self) -> Tuple[float, float]:
        return float(np.min(self.centers - self.widths)), float(np.max(self.centers + self.widths))


def random_bump_sum(rng: np.random.Generator, lo: float, hi: float, min_width: float = 0.3,
                    max_bumps: int = 3) -> BumpSum:
    """Seeded random bump sum supported strictly inside (lo, hi)."""
    count = int(rng.integers(1, max_bumps + 1))
    max_width = 0.45 * (hi - lo)
    widths = rng.uniform(min_width, max_width, size=count)
    centers = np.array([rng.uniform(lo + w + 1e-3, hi - w - 1e-3) for w in widths])
    weights = rng.standard_normal(count)
    return BumpSum(centers=centers, widths=widths, weights=weights)


def log_profile_from_bumps(bumps: BumpSum, t: np.ndarray) -> LogRadialProfile:
    rho, d1, d2 = bumps(t)
    return LogRadialProfile(t=t, rho=rho, d1=d1, d2=d2)


def radial_profile_from_bumps(bumps: BumpSum, r: np.ndarray) -> RadialProfile:
    """zeta(r) = r rho(log r): zeta' = rho + rho', zeta'' = (rho' + rho'') / r."""
    r = np.asarray(r, dtype=float)
    rho, d1, d2 = bumps(np.log(r))
    return RadialProfile(r=r, zeta=r * rho, d1=rho + d1, d2=(d1 + d2) / r)


def radial_bump(r: np.ndarray, center: float, half_width: float) -> RadialProfile:
    """Single polynomial bump in r."""
    bumps = BumpSum(np.array([center]), np.array([half_width]), np.array([1.0]))
    zeta, d1, d2 = bumps(r)
    return RadialProfile(r=np.asarray(r, dtype=float), zeta=zeta, d1=d1, d2=d2)


def profile_bank(seed: int, size: int, t_range: Tuple[float, float], nodes: int,
                 log_grid: bool = False, min_width: float = 0.3) -> List:
    """
    Seeded bank of random admissible profiles.

    Each profile draws from its own child stream of one SeedSequence, so the
    bank does not depend on how it is consumed.
    """
    streams = [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(size)]
    lo, hi = t_range
    if log_grid:
        grid = np.linspace(lo, hi, nodes)
        return [log_profile_from_bumps(random_bump_sum(rng, lo, hi, min_width), grid) for rng in streams]
    grid = np.linspace(np.exp(lo), np.exp(hi), nodes)
    return [radial_profile_from_bumps(random_bump_sum(rng, lo, hi, min_width), grid) for rng in streams]
