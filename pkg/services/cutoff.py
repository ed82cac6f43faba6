# services/cutoff.py
"""
Cutoff functions for the monotonicity kernel.

alpha is a mollified piecewise-linear step from 1 to 0, zeta solves
zeta' - zeta = -alpha with zeta = 0 for t >= log(1/2), and
psi = -1/2 e^(-t) zeta'. The ramp kinks are inset by the mollifier
half-width so that alpha = 1 exactly for t <= -c and alpha = 0 exactly for
t >= log(1/2).
"""
from typing import Dict, Optional
import logging
import math

import numpy as np
from scipy.integrate import cumulative_simpson, quad, quad_vec, simpson
from scipy.interpolate import CubicSpline

from config.settings import settings
from models.kernel import CutoffSpec
from services.exceptions import DomainError, QuadratureError

logger = logging.getLogger(__name__)

LOG_HALF = math.log(0.5)
MIN_OFFSET = 2.0 * math.pi * math.exp(math.pi / 2.0)
RAMP_NODES = 4001


def _bump_cdf(x: np.ndarray) -> np.ndarray:
    """Smooth step S on [0, 1] built from e^(-1/x)."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        left = np.where(x > 0.0, np.exp(-1.0 / np.where(x > 0.0, x, 1.0)), 0.0)
        right = np.where(x < 1.0, np.exp(-1.0 / np.where(x < 1.0, 1.0 - x, 1.0)), 0.0)
    return left / (left + right)


def _bump_cdf_prime(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xs = np.where(inside, x, 0.5)
    f, g = np.exp(-1.0 / xs), np.exp(-1.0 / (1.0 - xs))
    df, dg = f / xs ** 2, g / (1.0 - xs) ** 2
    return np.where(inside, (df * g + f * dg) / (f + g) ** 2, 0.0)


class Cutoff:
    """
    alpha, zeta and psi for one offset c, with exact far-left and far-right branches.

    Args:
        c: offset; c + log(1/2) must exceed 2 pi e^(pi/2)
        fine_step: spacing of the zeta and e^t psi tables
    """

    def __init__(self, c: float = settings.KERNEL_C, fine_step: float = settings.KERNEL_FINE_STEP):
        if c + LOG_HALF <= MIN_OFFSET:
            raise DomainError(f"c = {c} violates c + log(1/2) > 2 pi e^(pi/2) = {MIN_OFFSET:.4f}")
        self.c = float(c)
        self.T = LOG_HALF
        self.tau = 0.25 * (self.c + LOG_HALF)
        self.t0 = -self.c + 2.0 * self.tau
        self.w = 0.5 * self.tau
        self.ramp_start = -self.c + self.w
        self.ramp_end = LOG_HALF - self.w
        self.ramp_length = self.ramp_end - self.ramp_start

        y = np.linspace(-self.w, 0.0, RAMP_NODES)
        ramp = cumulative_simpson(self.mollifier_cdf(y), x=y, initial=0.0)
        self._ramp = CubicSpline(y, ramp, bc_type=((1, 0.0), (1, 0.5)))

        self.lam = self._far_left_asymptote()
        self._build_tables(fine_step)
        logger.info(f"Cutoff c = {self.c}: tau = {self.tau:.6f}, t0 = {self.t0:.6f}, lambda = {self.lam:.6e}")

    # --- alpha ---

    def mollifier_cdf(self, y: np.ndarray) -> np.ndarray:
        return _bump_cdf((np.asarray(y, dtype=float) / self.w + 1.0) / 2.0)

    def mollifier_density(self, y: np.ndarray) -> np.ndarray:
        return _bump_cdf_prime((np.asarray(y, dtype=float) / self.w + 1.0) / 2.0) / (2.0 * self.w)

    def smoothed_ramp(self, x: np.ndarray) -> np.ndarray:
        """Mollified max(x, 0); uses R(x) - R(-x) = x for the right half."""
        x = np.asarray(x, dtype=float)
        left = np.clip(x, -self.w, 0.0)
        mirror = np.clip(-x, -self.w, 0.0)
        return np.where(
            x <= -self.w, 0.0,
            np.where(x <= 0.0, self._ramp(left),
                     np.where(x < self.w, x + self._ramp(mirror), x)),
        )

    def alpha(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return 1.0 - (self.smoothed_ramp(t - self.ramp_start) - self.smoothed_ramp(t - self.ramp_end)) / self.ramp_length

    def alpha_prime(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return -(self.mollifier_cdf(t - self.ramp_start) - self.mollifier_cdf(t - self.ramp_end)) / self.ramp_length

    def alpha_second(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return -(self.mollifier_density(t - self.ramp_start) - self.mollifier_density(t - self.ramp_end)) / self.ramp_length

    # --- zeta and psi ---

    def _far_left_asymptote(self) -> float:
        """lambda = -integral of e^(-u) alpha'(u) over [-c, log 1/2], scaled by e^(-c) for the quadrature."""
        integrand = lambda u: -math.exp(-u - self.c) * float(self.alpha_prime(u))
        breaks = [self.ramp_start + self.w, self.ramp_end - self.w]
        value, error = quad(integrand, -self.c, self.T, points=breaks, limit=400, epsabs=1e-14, epsrel=1e-13)
        if error > 1e-10 * abs(value):
            raise QuadratureError(f"lambda quadrature did not converge (error {error:.3e})")
        return value * math.exp(self.c)

    def _build_tables(self, fine_step: float):
        nodes = int(math.ceil((self.T + self.c) / fine_step)) + 1
        t = np.linspace(-self.c, self.T, nodes)
        span = self.T - t

        def zeta_integrand(v):
            return span * np.exp(-v * span) * self.alpha(t + v * span)

        def psi_integrand(v):
            return -0.5 * span * np.exp(-v * span) * self.alpha_prime(t + v * span)

        zeta, zeta_err = quad_vec(zeta_integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, norm="max", limit=20000)
        scaled_psi, psi_err = quad_vec(psi_integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, norm="max", limit=20000)
        if max(zeta_err, psi_err) > settings.KERNEL_QUAD_EPSABS:
            raise QuadratureError(f"Cutoff tables did not converge (errors {zeta_err:.3e}, {psi_err:.3e})")
        self.table_t = t
        self.zeta_table = zeta
        self.scaled_psi_table = scaled_psi
        self._zeta = CubicSpline(t, zeta)
        self._scaled_psi = CubicSpline(t, scaled_psi)

    def zeta(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        inner = self._zeta(np.clip(t, -self.c, self.T))
        with np.errstate(over="ignore"):
            left = 1.0 - self.lam * np.exp(np.minimum(t, -self.c))
        return np.where(t <= -self.c, left, np.where(t >= self.T, 0.0, inner))

    def zeta_prime(self, t: np.ndarray) -> np.ndarray:
        """zeta' = zeta - alpha."""
        t = np.asarray(t, dtype=float)
        return np.where(t <= -self.c, -self.lam * np.exp(np.minimum(t, -self.c)), self.zeta(t) - self.alpha(t))

    def scaled_psi(self, t: np.ndarray) -> np.ndarray:
        """e^t psi(t) = -zeta'(t) / 2, tabulated independently of zeta."""
        t = np.asarray(t, dtype=float)
        inner = self._scaled_psi(np.clip(t, -self.c, self.T))
        left = 0.5 * self.lam * np.exp(np.minimum(t, -self.c))
        return np.where(t <= -self.c, left, np.where(t >= self.T, 0.0, inner))

    def psi(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        inner = np.exp(-np.clip(t, -self.c, self.T)) * self._scaled_psi(np.clip(t, -self.c, self.T))
        return np.where(t <= -self.c, 0.5 * self.lam, np.where(t >= self.T, 0.0, inner))

    # --- Checks ---

    def normalization(self) -> float:
        """integral of e^t psi over the line; equals 1/2."""
        far_left = 0.5 * self.lam * math.exp(-self.c)
        return far_left + float(simpson(self.scaled_psi_table, x=self.table_t))

    def conditions(self, step: float = 1e-3) -> Dict[str, float]:
        """
        Defects of the cutoff conditions on a grid around the ramp.

        Positive entries measure violations: alpha outside [0, 1], alpha' > 0,
        the one-sided signs of alpha'' around t0, the symmetry about t0, and
        positive values of zeta' = -2 e^t psi on the table.
        """
        t = np.arange(-self.c - 2.0, self.T + 2.0, step)
        alpha = self.alpha(t)
        second = self.alpha_second(t)
        left = t < self.t0 + self.tau
        right = t > self.t0 - self.tau
        return {
            "range": float(max(0.0, -alpha.min(), alpha.max() - 1.0)),
            "monotone": float(max(0.0, self.alpha_prime(t).max())),
            "concave_left": float(max(0.0, second[left].max())),
            "convex_right": float(max(0.0, -second[right].min())),
            "symmetry": self.symmetry_defect(t),
            "midpoint": float(abs(self.alpha(self.t0) - 0.5)),
            "zeta_increase": float(max(0.0, (-2.0 * self.scaled_psi_table).max())),
            "far_left_join": float(abs(self.zeta_table[0] - (1.0 - self.lam * math.exp(-self.c)))),
            "far_right_join": float(abs(self.zeta_table[-1])),
        }

    def symmetry_defect(self, t: Optional[np.ndarray] = None) -> float:
        if t is None:
            t = np.linspace(-self.c - 2.0, self.T + 2.0, 20001)
        return float(np.max(np.abs(1.0 - self.alpha(t) - self.alpha(2.0 * self.t0 - t))))

    @property
    def spec(self) -> CutoffSpec:
        return CutoffSpec(
            c=self.c, tau=self.tau, t0=self.t0, half_width=self.w,
            ramp_start=self.ramp_start, ramp_end=self.ramp_end,
            lam=self.lam, lam_first_reading=0.5 * self.lam,
        )


# Cache of built cutoffs
_cutoffs: Dict[float, Cutoff] = {}


def build_cutoff(c: float = settings.KERNEL_C) -> Cutoff:
    """Get or build the cutoff for an offset c"""
    if c not in _cutoffs:
        _cutoffs[c] = Cutoff(c)
    return _cutoffs[c]
