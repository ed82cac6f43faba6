# services/cone_stability.py
"""
Cone Stability Service
Second variation of Hamiltonian-stationary cones along Hamiltonian variations
f = zeta(r) cos(l s / sqrt(pq)), the instability window, three-piece
destabilizing profiles and the stability scan over the cone catalog.
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
from joblib import Parallel, delayed
from scipy.interpolate import BPoly
from tqdm import tqdm

from config.settings import settings
from models.cone import ConeSpec
from models.stability import ModeSpec, StabilityCertificate, StabilityRow
from services.exceptions import (
    CertificationError,
    DomainError,
    InadmissibleModeError,
    QuadratureError,
    SupportViolationError,
    TripwireError,
    WindowEmptyError,
)
from services.numerics import first_derivative, integrate_axis, second_derivative, simpson_with_error
from services.profiles import SUPPORT_TOL, LogRadialProfile, RadialProfile, profile_bank

logger = logging.getLogger(__name__)

Profile = Union[RadialProfile, LogRadialProfile]
Rational = Union[int, Fraction]

LOG_TWO = math.log(2.0)

# delta(r) = eps D(r / eps) on [eps/2, eps]; eta on [1, 2]
_INNER_TAPER = BPoly.from_derivatives([0.5, 1.0], [[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
_OUTER_TAPER = BPoly.from_derivatives([1.0, 2.0], [[1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])


@dataclass
class FormValue:
    value: float
    error: float
    prefactor: float

    @property
    def second_variation(self) -> float:
        return self.prefactor * self.value


# --- Exact arithmetic ---

def mass_coefficient(p: int, q: int, ell: Rational) -> Fraction:
    """((pq - l^2)^2 - l^2 (p - q)^2) / (pq)^2, the coefficient of rho^2 after the log substitution."""
    ell = Fraction(ell)
    pq = p * q
    return ((pq - ell * ell) ** 2 - ell * ell * (p - q) ** 2) / Fraction(pq * pq)


def instability_window(p: int, q: int, ell: Rational) -> bool:
    """True iff l(l - |p - q|) < pq < l(l + |p - q|), decided in rationals."""
    ell = Fraction(ell)
    gap = abs(p - q)
    return ell * (ell - gap) < p * q < ell * (ell + gap)


def find_destabilizing_mode(p: int, q: int) -> Optional[int]:
    """Smallest integer l in 1..pq inside the open window, or None."""
    for ell in range(1, p * q + 1):
        if instability_window(p, q, ell):
            return ell
    return None


def strongest_mode(p: int, q: int) -> Optional[int]:
    """Integer window mode with the most negative mass coefficient (smallest l on ties)."""
    candidates = [ell for ell in range(1, p * q + 1) if instability_window(p, q, ell)]
    if not candidates:
        return None
    return min(candidates, key=lambda ell: (mass_coefficient(p, q, ell), ell))


def tail_threshold(p: int, q: int) -> int:
    """Smallest l beyond which the mass coefficient grows monotonically with l."""
    pq = p * q
    bound = max(Fraction(2 * pq), pq + Fraction((p - q) ** 2, 2))
    ell = math.isqrt(int(bound))
    while ell * ell < bound:
        ell += 1
    return ell


def form_constants(spec: ConeSpec, mode: ModeSpec) -> Tuple[float, float]:
    """(m, kappa) with m = l^2 / pq and kappa = l^2 (q - p)^2 / (pq)^2."""
    pq = spec.p * spec.q
    ell2 = mode.value ** 2
    return ell2 / pq, ell2 * (spec.q - spec.p) ** 2 / pq ** 2


def mode_prefactor(spec: ConeSpec, mode: ModeSpec) -> float:
    """
    Angular integral that turns the radial bracket into the second variation.

    A single cos or sin mode contributes pi k sqrt(pq) (2 pi k sqrt(pq) for the
    constant mode); parity "both" is the sum of the cos and sin variations.
    """
    full = spec.length
    if mode.numerator == 0:
        return 0.0 if mode.parity == "sin" else full
    return full if mode.parity == "both" else 0.5 * full


def _check_mode(spec: ConeSpec, mode: ModeSpec):
    if not mode.admissible_for(spec):
        raise InadmissibleModeError(
            f"Mode l = {mode} is not periodic on the {spec.k}-fold link: l k must be an integer"
        )


# --- Quadratic forms ---

def evaluate_mode_form(spec: ConeSpec, mode: ModeSpec, profile: Profile) -> FormValue:
    """
    Radial bracket of the second variation for f = zeta(r) cos(l s / sqrt(pq)).

    Evaluated as the integral of ((r A)^2 - kappa (zeta/r)^2) dr / r with
    r A = r zeta'' + zeta' - m zeta / r; log-radial profiles use dt = dr / r.

    Args:
        spec: cone
        mode: admissible angular mode
        profile: RadialProfile or LogRadialProfile

    Returns:
        FormValue with the bracket, its Richardson error estimate and the angular prefactor
    """
    _check_mode(spec, mode)
    m, kappa = form_constants(spec, mode)
    r_a, ratio = profile.scaled_terms(m)
    integrand = r_a * r_a - kappa * ratio * ratio
    if isinstance(profile, RadialProfile):
        with np.errstate(divide="ignore", invalid="ignore"):
            integrand = np.where(profile.r > 0, integrand / profile.r, 0.0)
    value, error = profile.integrate(integrand)
    return FormValue(value=value, error=error, prefactor=mode_prefactor(spec, mode))


def mode_radial_form(spec: ConeSpec, mode: ModeSpec, profile: Profile) -> float:
    return evaluate_mode_form(spec, mode, profile).value


def log_substitution_form(p: int, ell: Rational, profile: LogRadialProfile, q: Optional[int] = None) -> float:
    """
    The bracket for q = p + 1 after r = e^t, zeta = e^t rho, integrated by parts:
    integral of rho''^2 + (2 + 2 l^2 / pq) rho'^2 + mass rho^2 dt.
    """
    q = p + 1 if q is None else q
    if abs(q - p) != 1:
        raise DomainError(f"The log substitution form applies to |p - q| = 1, got ({p}, {q})")
    pq = p * q
    ell = Fraction(ell)
    slope_coeff = 2.0 + 2.0 * float(ell * ell) / pq
    mass = float(mass_coefficient(p, q, ell))
    integrand = profile.d2 ** 2 + slope_coeff * profile.d1 ** 2 + mass * profile.rho ** 2
    return profile.integrate(integrand)[0]


def hamiltonian_second_variation(
    spec: ConeSpec,
    r: np.ndarray,
    s: np.ndarray,
    f: np.ndarray,
    derivatives: Optional[Sequence[np.ndarray]] = None,
    tolerance: float = settings.QUADRATURE_TOL,
) -> float:
    """
    Second variation of area on the cone for X = J grad f.

    Args:
        spec: cone
        r: uniform radial grid with an odd number of nodes
        s: uniform grid over the whole link without the closing sample
        f: Hamiltonian on the (r, s) grid
        derivatives: optional analytic (f_r, f_rr, f_s, f_ss)
        tolerance: relative bound on the Simpson error estimate in r

    Returns:
        integral of [(Delta f)^2 - r^-4 (q - p)^2 / pq f_s^2] r dr ds: the periodic
        rectangle rule around the link, which is exact for angular frequencies below
        n_s / 2, then Simpson with its error estimate in r
    """
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    f = np.asarray(f, dtype=float)
    if f.shape != (r.shape[0], s.shape[0]):
        raise DomainError(f"Hamiltonian grid {f.shape} does not match ({r.shape[0]}, {s.shape[0]})")
    if r[0] < 0:
        raise DomainError("The radial grid must start at r >= 0")
    h_r = float(r[-1] - r[0]) / (r.shape[0] - 1)
    h_s = spec.length / s.shape[0]
    if abs(s[0]) > 1e-12 * spec.length or abs(s[1] - s[0] - h_s) > 1e-9 * h_s:
        raise DomainError("The s grid must cover the whole link uniformly, without the closing sample")
    if r.shape[0] < 5 or r.shape[0] % 2 == 0:
        raise QuadratureError(f"The radial grid needs an odd number of at least 5 nodes, got {r.shape[0]}")

    if derivatives is None:
        f_r = first_derivative(f, h_r, axis=0)
        f_rr = second_derivative(f, h_r, axis=0)
        f_s = first_derivative(f, h_s, axis=1, periodic=True)
        f_ss = second_derivative(f, h_s, axis=1, periodic=True)
    else:
        f_r, f_rr, f_s, f_ss = (np.asarray(d, dtype=float) for d in derivatives)

    scale = max(1.0, float(np.max(np.abs(f))))
    for end in (0, -1):
        worst = max(float(np.max(np.abs(f[end]))), float(np.max(np.abs(f_r[end]))))
        if worst > SUPPORT_TOL * scale:
            raise SupportViolationError(f"f and f_r must vanish at r = {r[end]:.6g} (max {worst:.3e})")

    rr = r[:, None]
    inside = rr > 0
    safe = np.where(inside, rr, 1.0)
    laplacian = f_rr + f_r / safe + f_ss / safe ** 2
    coupling = (spec.q - spec.p) ** 2 / (spec.p * spec.q)
    integrand = np.where(inside, laplacian ** 2 * rr - coupling * f_s ** 2 / safe ** 3, 0.0)

    radial = integrate_axis(integrand, h_s, axis=1, periodic=True)
    value, error = simpson_with_error(radial, h_r)
    if error > tolerance * (1.0 + abs(value)):
        raise QuadratureError(f"Radial grid too coarse: Simpson error estimate {error:.3e} for value {value:.6g}")
    return value


# --- Three-piece destabilizing profiles ---

def check_tapers(samples: int = 20001) -> Dict[str, float]:
    """Sup norms of the taper derivatives in scale-free form (delta' and eps delta'')."""
    y = np.linspace(0.5, 1.0, samples)
    x = np.linspace(1.0, 2.0, samples)
    bounds = {
        "inner_value_max": float(np.max(_INNER_TAPER(y))),
        "inner_value_min": float(np.min(_INNER_TAPER(y))),
        "inner_slope": float(np.max(np.abs(_INNER_TAPER.derivative(1)(y)))),
        "inner_curvature": float(np.max(np.abs(_INNER_TAPER.derivative(2)(y)))),
        "outer_slope": float(np.max(np.abs(_OUTER_TAPER.derivative(1)(x)))),
        "outer_curvature": float(np.max(np.abs(_OUTER_TAPER.derivative(2)(x)))),
    }
    if (bounds["inner_slope"] > settings.TAPER_SLOPE_BOUND
            or bounds["inner_curvature"] > settings.TAPER_CURVATURE_BOUND
            or bounds["inner_value_min"] < -1e-12 or bounds["inner_value_max"] > 1.0 + 1e-12):
        raise TripwireError("Inner taper violates its derivative bounds", diagnostics=bounds)
    return bounds


def _piece(lo: float, hi: float, nodes_per_unit: int) -> np.ndarray:
    intervals = max(4, 2 * math.ceil(nodes_per_unit * (hi - lo) / 2.0))
    return np.linspace(lo, hi, intervals + 1)


def _to_log_derivatives(rho: np.ndarray, slope: np.ndarray, curvature: np.ndarray):
    """(rho, zeta', r zeta'') -> (rho, rho', rho'')."""
    d1 = slope - rho
    return rho, d1, curvature - d1


def destabilizing_profile(
    spec: ConeSpec,
    mode: ModeSpec,
    eps: Optional[float] = None,
    log_eps: Optional[float] = None,
    nodes_per_unit: int = settings.PROFILE_NODES_PER_UNIT,
) -> LogRadialProfile:
    """
    zeta = delta on [eps/2, eps], zeta = r on [eps, 1], zeta = eta on [1, 2].

    The inner taper is delta(r) = eps D(r / eps), so every sampled quantity
    depends only on r / eps and eps may be given through log_eps alone.
    """
    if log_eps is None:
        if eps is None or not 0.0 < eps < 1.0:
            raise DomainError(f"The inner scale must satisfy 0 < eps < 1, got {eps}")
        log_eps = math.log(eps)
    if not log_eps < 0.0:
        raise DomainError(f"The inner scale must satisfy log(eps) < 0, got {log_eps}")
    _check_mode(spec, mode)
    if not instability_window(spec.p, spec.q, mode.ell):
        raise WindowEmptyError(f"l = {mode} lies outside the instability window of ({spec.p}, {spec.q})")

    local = _piece(-LOG_TWO, 0.0, nodes_per_unit)
    y = np.exp(local)
    inner = _to_log_derivatives(
        _INNER_TAPER(y) / y, _INNER_TAPER.derivative(1)(y), y * _INNER_TAPER.derivative(2)(y)
    )
    middle_t = np.linspace(log_eps, 0.0, settings.PROFILE_MIDDLE_INTERVALS + 1)
    ones = np.ones_like(middle_t)
    middle = _to_log_derivatives(ones, ones, np.zeros_like(middle_t))
    outer_t = _piece(0.0, LOG_TWO, nodes_per_unit)
    radius = np.exp(outer_t)
    outer = _to_log_derivatives(
        _OUTER_TAPER(radius) / radius, _OUTER_TAPER.derivative(1)(radius), radius * _OUTER_TAPER.derivative(2)(radius)
    )

    t = np.concatenate([log_eps + local, middle_t[1:], outer_t[1:]])
    columns = [np.concatenate([inner[i], middle[i][1:], outer[i][1:]]) for i in range(3)]
    n_in, n_mid = local.shape[0] - 1, middle_t.shape[0] - 1
    breaks = (0, n_in, n_in + n_mid, t.shape[0] - 1)
    return LogRadialProfile(t=t, rho=columns[0], d1=columns[1], d2=columns[2], breaks=breaks,
                            labels=("inner", "middle", "outer"))


def middle_piece_value(spec: ConeSpec, mode: ModeSpec, log_eps: float) -> float:
    """Closed form of the linear piece: mass * log(1/eps)."""
    return float(mass_coefficient(spec.p, spec.q, mode.ell)) * (-log_eps)


def piece_contributions(spec: ConeSpec, mode: ModeSpec, profile: LogRadialProfile) -> Dict[str, float]:
    m, kappa = form_constants(spec, mode)
    r_a, ratio = profile.scaled_terms(m)
    values = profile.segment_integrals(r_a * r_a - kappa * ratio * ratio)
    labels = profile.labels or tuple(f"piece{i}" for i in range(len(values)))
    return dict(zip(labels, values))


def _certificate(spec: ConeSpec, mode: ModeSpec, log_eps: float, margin: float
                 ) -> Tuple[StabilityCertificate, bool]:
    profile = destabilizing_profile(spec, mode, log_eps=log_eps)
    form = evaluate_mode_form(spec, mode, profile)
    certified = form.value < 0.0 and form.value < -margin * form.error
    certificate = StabilityCertificate(
        spec=spec, mode=mode,
        verdict="negative-direction-found" if certified else "not-certified",
        value=form.value, error_estimate=form.error, prefactor=form.prefactor,
        eps=math.exp(log_eps), log_eps=log_eps,
        mass=float(mass_coefficient(spec.p, spec.q, mode.ell)),
        profile_hash=profile.digest(), profile=profile,
    )
    return certificate, certified


def certify_instability(
    spec: ConeSpec,
    mode: ModeSpec,
    eps: float = settings.EPS_START,
    margin: float = settings.CERT_MARGIN,
    log_eps_floor: float = settings.LOG_EPS_FLOOR,
) -> StabilityCertificate:
    """
    Negative direction for a window mode, shrinking eps until the value is certified.

    The first attempt uses eps; if it is not below -margin times the error
    estimate, log(eps) is bisected between the failing start and the floor.

    Raises:
        CertificationError: even the floor scale does not certify
    """
    if not 0.0 < eps < 1.0:
        raise DomainError(f"The inner scale must satisfy 0 < eps < 1, got {eps}")
    start = math.log(eps)
    certificate, certified = _certificate(spec, mode, start, margin)
    if certified:
        return certificate

    logger.warning(f"({spec.p},{spec.q},{spec.k}) l = {mode}: value {certificate.value:.6g} at eps = {eps:g}, bisecting")
    best, certified = _certificate(spec, mode, log_eps_floor, margin)
    if not certified:
        logger.error(f"({spec.p},{spec.q},{spec.k}) l = {mode} not certified at log(eps) = {log_eps_floor:g}")
        raise CertificationError(
            f"No certified negative value down to log(eps) = {log_eps_floor:g}",
            best_value=min(best.value, certificate.value),
        )
    failing, passing = start, log_eps_floor
    while failing - passing > settings.BISECTION_WIDTH:
        middle = 0.5 * (failing + passing)
        trial, ok = _certificate(spec, mode, middle, margin)
        if ok:
            passing, best = middle, trial
        else:
            failing = middle
    logger.info(f"({spec.p},{spec.q},{spec.k}) l = {mode}: certified {best.value:.6g} at log(eps) = {passing:.4g}")
    return best


def multicover_certificate(p: int, q: int, k: int) -> StabilityCertificate:
    """Negative direction on the k-fold (p, q) cone at l = p + 1/k (q > p)."""
    if k < 2:
        raise DomainError(f"Multi-cover certificates need k >= 2, got {k}")
    if q <= p:
        raise DomainError(f"Multi-cover certificates need q > p, got ({p}, {q})")
    ell = Fraction(p) + Fraction(1, k)
    mass = mass_coefficient(p, q, ell)
    if mass >= 0:
        logger.error(f"Mass coefficient {mass} is nonnegative at l = {ell} for ({p},{q},{k})")
        raise TripwireError(
            f"(pq - l^2)^2 - l^2 (p - q)^2 >= 0 at l = {ell}",
            diagnostics={"p": p, "q": q, "k": k, "ell": str(ell), "mass": str(mass)},
        )
    spec = ConeSpec(p=p, q=q, k=k)
    return certify_instability(spec, ModeSpec.from_fraction(ell))


# --- Scans ---

def bank_minimum(spec: ConeSpec, mode: ModeSpec, bank: List[Profile]) -> Tuple[float, int]:
    values = [mode_radial_form(spec, mode, profile) for profile in bank]
    index = int(np.argmin(values))
    return float(values[index]), index


def _coprime_pairs(pq_max: int) -> List[Tuple[int, int]]:
    return [(p, q) for p in range(1, pq_max) for q in range(1, pq_max - p + 1) if math.gcd(p, q) == 1]


class ConeStabilityService:
    """Stability verdicts over the cone catalog"""

    def __init__(self, seed: int = settings.BANK_SEED, bank_size: int = settings.BANK_SIZE,
                 nodes: int = settings.PROFILE_NODES, t_range: Tuple[float, float] = settings.PROFILE_T_RANGE):
        self.seed = seed
        self.bank_size = bank_size
        self.nodes = nodes
        self.t_range = t_range
        self._bank: Optional[List[LogRadialProfile]] = None

    @property
    def bank(self) -> List[LogRadialProfile]:
        if self._bank is None:
            logger.info(f"Building a {self.bank_size}-profile bank (seed {self.seed})")
            self._bank = profile_bank(self.seed, self.bank_size, self.t_range, self.nodes, log_grid=True)
        return self._bank

    def bank_certificate(self, spec: ConeSpec, modes: int = settings.MODE_MAX) -> StabilityCertificate:
        """Smallest bracket over the bank and all integer modes 0..modes."""
        best: Optional[Tuple[float, int, int]] = None
        for ell in range(modes + 1):
            value, index = bank_minimum(spec, ModeSpec(numerator=ell), self.bank)
            if best is None or value < best[0]:
                best = (value, index, ell)
        value, index, ell = best
        verdict = "nonnegative-on-bank" if value >= 0.0 else "negative-direction-found"
        if value < 0.0:
            logger.error(f"({spec.p},{spec.q},{spec.k}) bank profile {index} is negative at l = {ell}: {value:.6g}")
        mode = ModeSpec(numerator=ell)
        return StabilityCertificate(
            spec=spec, mode=mode, verdict=verdict, value=value,
            prefactor=mode_prefactor(spec, mode), profile_hash=self.bank[index].digest(),
            seed=self.seed, profile=self.bank[index],
        )

    def classify(self, p: int, q: int, k: int, modes: int = settings.MODE_MAX) -> StabilityCertificate:
        spec = ConeSpec(p=p, q=q, k=k)
        if k >= 2:
            if p == q:
                return StabilityCertificate(spec=spec, mode=ModeSpec(numerator=p * k + 1, denominator=k),
                                            verdict="window-empty")
            low, high = min(p, q), max(p, q)
            certificate = multicover_certificate(low, high, k)
            return certificate.model_copy(update={"spec": spec})
        ell = strongest_mode(p, q)
        if ell is None:
            return self.bank_certificate(spec, modes)
        return certify_instability(spec, ModeSpec(numerator=ell))

    def stability_scan(
        self,
        pq_max: int = settings.PQ_MAX,
        k_max: int = 1,
        modes: int = settings.MODE_MAX,
        n_jobs: int = settings.N_JOBS,
        progress: bool = False,
    ) -> Tuple[List[StabilityRow], List[StabilityCertificate]]:
        """
        Classify every coprime (p, q) with p + q <= pq_max and k <= k_max.

        Returns:
            (table rows, certificates) in catalog order
        """
        if self._bank is None and self.bank_size:
            _ = self.bank
        jobs = [(p, q, k) for p, q in _coprime_pairs(pq_max) for k in range(1, k_max + 1)]
        iterator = tqdm(jobs, desc="stability", disable=not progress)
        certificates = Parallel(n_jobs=n_jobs)(delayed(self.classify)(p, q, k, modes) for p, q, k in iterator)
        rows = [
            StabilityRow(p=c.spec.p, q=c.spec.q, k=c.spec.k, ell=str(c.mode), value=c.value, verdict=c.verdict)
            for c in certificates
        ]
        logger.info(f"Stability scan finished: {len(rows)} cones")
        return rows, certificates


# Singleton instance
_stability_service: Optional[ConeStabilityService] = None


def get_stability_service() -> ConeStabilityService:
    """Get or create the stability service singleton"""
    global _stability_service
    if _stability_service is None:
        _stability_service = ConeStabilityService()
    return _stability_service
