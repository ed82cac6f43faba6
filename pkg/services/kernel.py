# services/kernel.py
"""
Monotonicity Kernel Service
Solves eta_tt - eta_thth - 2 eta_t = 0 with eta(t, 0) = 0, eta_theta(t, 0) = zeta(t)
through the Riemann function J0(sqrt(theta^2 - mu^2)), and builds the kernels

    G = eta_theta - eta_theta_t,   F = -1/2 e^(-t) (eta_theta_t cos(theta) + eta_t sin(theta)).

Every theta-integral uses the substitution mu = theta sin(u), which removes the
square-root endpoint behaviour of the kernel. F is carried as e^t F, which is
bounded on the whole table.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union
import csv
import json
import logging
import math

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import quad_vec
from tqdm import tqdm

from config.settings import settings
from models.kernel import CutoffSpec, KernelBoundsReport, KernelHeader, WaveReport
from services.bessel import bessel_j0, bessel_j0_x
from services.cutoff import Cutoff, build_cutoff
from services.exceptions import PathDisagreementError, QuadratureError, TripwireError
from services.numerics import first_derivative, second_derivative

logger = logging.getLogger(__name__)

HALF_PI = 0.5 * math.pi
N_INTEGRALS = 6


@dataclass
class KernelTables:
    """Immutable (t, theta) tables; theta is the time variable of the wave equation."""
    cutoff: CutoffSpec
    t: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    eta_t: np.ndarray
    scaled_F: np.ndarray        # e^t F from the explicit psi formula
    G: np.ndarray               # from the alpha formula
    scaled_F_from_eta: Optional[np.ndarray] = None
    G_from_eta: Optional[np.ndarray] = None
    quad_epsabs: float = settings.KERNEL_QUAD_EPSABS
    path_rtol: float = settings.KERNEL_PATH_RTOL

    @property
    def F(self) -> np.ndarray:
        return np.exp(-self.t)[:, None] * self.scaled_F

    @property
    def spacings(self) -> Tuple[float, float]:
        return float(self.t[1] - self.t[0]), float(self.theta[1] - self.theta[0])

    def header(self) -> KernelHeader:
        return KernelHeader(
            cutoff=self.cutoff, t_min=float(self.t[0]), t_max=float(self.t[-1]),
            t_nodes=self.t.shape[0], theta_nodes=self.theta.shape[0],
            quad_epsabs=self.quad_epsabs, path_rtol=self.path_rtol,
        )


def _integrals(cutoff: Cutoff, t: np.ndarray, theta_abs: np.ndarray, epsabs: float) -> np.ndarray:
    """
    The six theta-integrals over mu in [-theta, theta], for theta >= 0:
    eta, eta_t, and the integral parts of eta_theta, eta_theta_t, e^t F and G.
    """
    t = np.asarray(t, dtype=float)[:, None]
    theta = np.asarray(theta_abs, dtype=float)[None, :]
    sin_theta, cos_theta = np.sin(theta), np.cos(theta)

    def integrand(u: float) -> np.ndarray:
        cos_u = math.cos(u)
        mu = theta * math.sin(u)
        weight = 0.5 * theta * cos_u * np.exp(-mu)
        sigma = theta * cos_u
        kernel = bessel_j0(sigma)
        kernel_theta = 2.0 * theta * bessel_j0_x(sigma * sigma)
        args = t + mu
        zeta = cutoff.zeta(args)
        zeta_prime = cutoff.zeta_prime(args)
        return np.stack([
            weight * kernel * zeta,
            weight * kernel * zeta_prime,
            weight * kernel_theta * zeta,
            weight * kernel_theta * zeta_prime,
            weight * (sin_theta * kernel + cos_theta * kernel_theta) * cutoff.scaled_psi(args),
            weight * kernel_theta * cutoff.alpha(args),
        ])

    values, error = quad_vec(integrand, -HALF_PI, HALF_PI, epsabs=epsabs, epsrel=1e-10, norm="max", limit=2000)
    if error > 10.0 * epsabs + 1e-10 * float(np.max(np.abs(values))):
        raise QuadratureError(f"Kernel quadrature did not converge: error {error:.3e}")
    return values


def _column_block(cutoff: Cutoff, t: np.ndarray, theta: np.ndarray, epsabs: float) -> Dict[str, np.ndarray]:
    theta_abs = np.abs(theta)
    sign = np.sign(theta)[None, :]
    eta, eta_t, eta_theta_int, eta_theta_t_int, scaled_f_int, g_int = _integrals(cutoff, t, theta_abs, epsabs)

    tt = t[:, None]
    th = theta_abs[None, :]
    ahead, behind = tt + th, tt - th
    damp, grow = np.exp(-th), np.exp(th)
    eta_theta = 0.5 * (damp * cutoff.zeta(ahead) + grow * cutoff.zeta(behind)) + eta_theta_int
    eta_theta_t = 0.5 * (damp * cutoff.zeta_prime(ahead) + grow * cutoff.zeta_prime(behind)) + eta_theta_t_int
    eta_t = sign * eta_t

    return {
        "eta": sign * eta,
        "eta_t": eta_t,
        "scaled_F_from_eta": -0.5 * (eta_theta_t * np.cos(th) + eta_t * np.sin(sign * th)),
        "G_from_eta": eta_theta - eta_theta_t,
        "scaled_F": 0.5 * (damp * cutoff.scaled_psi(ahead) + grow * cutoff.scaled_psi(behind)) * np.cos(th)
                    + scaled_f_int,
        "G": 0.5 * (damp * cutoff.alpha(ahead) + grow * cutoff.alpha(behind)) + g_int,
    }


def default_grid(c: float = settings.KERNEL_C, t_nodes: int = settings.KERNEL_T_NODES,
                 theta_nodes: int = settings.KERNEL_THETA_NODES) -> Tuple[np.ndarray, np.ndarray]:
    """t in [-3c, 3] and theta in [-pi/2, pi/2]."""
    return np.linspace(-3.0 * c, 3.0, t_nodes), np.linspace(-HALF_PI, HALF_PI, theta_nodes)


def build_tables(
    cutoff: Optional[Cutoff] = None,
    t: Optional[np.ndarray] = None,
    theta: Optional[np.ndarray] = None,
    n_jobs: int = settings.N_JOBS,
    chunk: int = settings.KERNEL_T_CHUNK,
    epsabs: float = settings.KERNEL_QUAD_EPSABS,
    progress: bool = False,
) -> KernelTables:
    """
    Tabulate eta, F and G column block by column block.

    The block size is fixed independently of n_jobs, so the tables do not
    depend on the degree of parallelism.
    """
    cutoff = cutoff or build_cutoff()
    if t is None or theta is None:
        t_default, theta_default = default_grid(cutoff.c)
        t = t_default if t is None else t
        theta = theta_default if theta is None else theta
    t, theta = np.asarray(t, dtype=float), np.asarray(theta, dtype=float)
    blocks = [t[i:i + chunk] for i in range(0, t.shape[0], chunk)]
    logger.info(f"Building kernel tables on a {t.shape[0]} x {theta.shape[0]} grid in {len(blocks)} blocks")

    iterator = tqdm(blocks, desc="kernel", disable=not progress)
    results = Parallel(n_jobs=n_jobs)(delayed(_column_block)(cutoff, block, theta, epsabs) for block in iterator)
    merged = {key: np.concatenate([r[key] for r in results], axis=0) for key in results[0]}
    return KernelTables(cutoff=cutoff.spec, t=t, theta=theta, quad_epsabs=epsabs, **merged)


def solve_wave(cutoff: Cutoff, t: np.ndarray, theta: np.ndarray, epsabs: float = settings.KERNEL_QUAD_EPSABS
               ) -> np.ndarray:
    """eta(t, theta) on a grid."""
    t, theta = np.asarray(t, dtype=float), np.asarray(theta, dtype=float)
    return np.sign(theta)[None, :] * _integrals(cutoff, t, np.abs(theta), epsabs)[0]


def compute_F_G(tables: KernelTables, rtol: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    F and G from the explicit formulas, checked against the eta-derivative path.

    Raises:
        PathDisagreementError: relative deviation above rtol
    """
    rtol = tables.path_rtol if rtol is None else rtol
    deviation_f, deviation_g = path_deviations(tables)
    if max(deviation_f, deviation_g) > rtol:
        diagnostics = {"F": deviation_f, "G": deviation_g, "rtol": rtol}
        logger.error(f"F/G paths disagree: {diagnostics}")
        raise PathDisagreementError("The two F/G computation paths disagree", diagnostics=diagnostics)
    return tables.F, tables.G


def path_deviations(tables: KernelTables) -> Tuple[float, float]:
    if tables.scaled_F_from_eta is None or tables.G_from_eta is None:
        return 0.0, 0.0
    scale_f = float(np.max(np.abs(tables.scaled_F)))
    scale_g = float(np.max(np.abs(tables.G)))
    deviation_f = float(np.max(np.abs(tables.scaled_F_from_eta - tables.scaled_F))) / scale_f
    deviation_g = float(np.max(np.abs(tables.G_from_eta - tables.G))) / scale_g
    return deviation_f, deviation_g


def wave_residual(values: np.ndarray, spacings: Tuple[float, float]) -> np.ndarray:
    """u_tt - u_thth - 2 u_t by central differences (interior nodes only are meaningful)."""
    h_t, h_theta = spacings
    return (second_derivative(values, h_t, axis=0) - second_derivative(values, h_theta, axis=1)
            - 2.0 * first_derivative(values, h_t, axis=0))


def cosine_identity(theta: np.ndarray) -> float:
    """max |cos(theta) - 1 - 1/2 integral of d/dtheta J0(sqrt(theta^2 - mu^2)) dmu|."""
    theta = np.abs(np.asarray(theta, dtype=float))

    def integrand(u: float) -> np.ndarray:
        sigma = theta * math.cos(u)
        return 0.5 * theta * math.cos(u) * 2.0 * theta * bessel_j0_x(sigma * sigma)

    values, _ = quad_vec(integrand, -HALF_PI, HALF_PI, epsabs=1e-13, epsrel=1e-12)
    return float(np.max(np.abs(np.cos(theta) - 1.0 - values)))


def initial_data_defect(cutoff: Cutoff, t: np.ndarray, step: float = 1e-4) -> float:
    """max |eta_theta(t, 0) - zeta(t)| with a central difference of eta in theta."""
    eta = solve_wave(cutoff, t, np.array([-step, step]))
    slope = (eta[:, 1] - eta[:, 0]) / (2.0 * step)
    return float(np.max(np.abs(slope - cutoff.zeta(t))))


def companion_initial_defect(cutoff: Cutoff, t: np.ndarray, step: float = 1e-2) -> float:
    """
    Data of v = e^(-t) (1 - G) on theta = 0, scaled by e^t: max of
    |1 - G(t, 0) - alpha(2 t0 - t)| and |G_theta(t, 0)| from fresh columns at 0, step, 2 step.
    """
    t = np.asarray(t, dtype=float)
    G = _column_block(cutoff, t, np.array([0.0, step, 2.0 * step]), settings.KERNEL_QUAD_EPSABS)["G"]
    value = float(np.max(np.abs(1.0 - G[:, 0] - cutoff.alpha(2.0 * cutoff.t0 - t))))
    slope = float(np.max(np.abs(-3.0 * G[:, 0] + 4.0 * G[:, 1] - G[:, 2]))) / (2.0 * step)
    return max(value, slope)


def wave_report(tables: KernelTables, cutoff: Optional[Cutoff] = None) -> WaveReport:
    """Residuals, regime checks and normalization for a set of tables."""
    cutoff = cutoff or build_cutoff(tables.cutoff.c)
    spacings = tables.spacings
    interior = (slice(1, -1), slice(1, -1))
    eta_scale = float(np.max(np.abs(tables.eta)))
    residual = float(np.max(np.abs(wave_residual(tables.eta, spacings)[interior]))) / eta_scale
    companion = float(np.max(np.abs(wave_residual(1.0 - tables.G, spacings)[interior])))
    companion /= max(float(np.max(np.abs(1.0 - tables.G))), 1e-300)
    deviation_f, deviation_g = path_deviations(tables)

    lam = tables.cutoff.lam
    theta = tables.theta[None, :]
    left = tables.t < -tables.cutoff.c - HALF_PI
    right = tables.t > math.log(0.5) + HALF_PI
    far_left_eta = far_left_f = far_left_g = far_right = None
    if np.any(left):
        tl = tables.t[left][:, None]
        far_left_eta = float(np.max(np.abs(tables.eta[left] - (theta - lam * np.exp(tl) * np.sin(theta)))))
        scale_f = float(np.max(np.abs(tables.scaled_F)))
        far_left_f = float(np.max(np.abs(tables.scaled_F[left] - 0.5 * lam * np.exp(tl)))) / scale_f
        far_left_g = float(np.max(np.abs(tables.G[left] - 1.0)))
    if np.any(right):
        far_right = float(max(np.max(np.abs(tables.eta[right])), np.max(np.abs(tables.scaled_F[right])),
                              np.max(np.abs(tables.G[right]))))

    report = WaveReport(
        wave_residual=residual, companion_residual=companion, symmetry_defect=cutoff.symmetry_defect(),
        path_deviation_F=deviation_f, path_deviation_G=deviation_g,
        far_left_eta=far_left_eta, far_left_F=far_left_f, far_left_G=far_left_g, far_right=far_right,
        normalization=abs(cutoff.normalization() - 0.5),
        initial_data=initial_data_defect(cutoff, tables.t),
        companion_initial=companion_initial_defect(cutoff, tables.t),
        cosine_identity=cosine_identity(tables.theta),
    )
    logger.info(f"Wave residual {residual:.3e}, path deviations F {deviation_f:.3e} G {deviation_g:.3e}")
    return report


def shift_scan(G: np.ndarray, tolerance: float) -> int:
    """Smallest k >= 1 such that G[i - k] >= G[i] - tolerance for every shift >= k."""
    n = G.shape[0]
    worst = np.array([float(np.min(G[:n - k] - G[k:])) for k in range(1, n)])
    failing = np.nonzero(worst < -tolerance)[0]
    return 1 if failing.size == 0 else int(failing[-1]) + 2


def certify_kernel_bounds(tables: KernelTables, tolerance: float = settings.KERNEL_BOUND_TOL,
                          wave: Optional[WaveReport] = None, strict: bool = True) -> KernelBoundsReport:
    """
    F >= 0 and 0 <= G <= 1 on the grid, plus the shift monotonicity of G.

    F is tested through e^t F relative to its maximum. theta0 = exp(-k dt / 2)
    for the smallest admissible shift k.

    Raises:
        TripwireError: a bound fails and strict is set
    """
    f_min = float(np.min(tables.scaled_F)) / float(np.max(np.abs(tables.scaled_F)))
    g_min, g_max = float(np.min(tables.G)), float(np.max(tables.G))
    steps = shift_scan(tables.G, tolerance)
    theta0 = math.exp(-0.5 * steps * tables.spacings[0])

    failures: List[str] = []
    if f_min < -tolerance:
        failures.append(f"F negative: min e^t F / max = {f_min:.3e}")
    if g_min < -tolerance:
        failures.append(f"G below 0: {g_min:.3e}")
    if g_max > 1.0 + tolerance:
        failures.append(f"G above 1: {g_max:.12f}")
    if not 0.0 < theta0 < 1.0:
        failures.append(f"theta0 = {theta0} outside (0, 1)")

    report = KernelBoundsReport(
        f_min=f_min, g_min=g_min, g_max=g_max, theta0=theta0, shift_steps=steps,
        tolerance=tolerance, passed=not failures, failures=failures, wave=wave,
    )
    if failures and strict:
        logger.error(f"Kernel bounds failed: {failures}")
        raise TripwireError("Kernel bounds violated", diagnostics=report.model_dump())
    logger.info(f"Kernel bounds hold; theta0 = {theta0:.6e} ({steps} shift steps)")
    return report


# --- Serialization ---

def save_tables(tables: KernelTables, directory: Union[str, Path], stem: str = "kernel") -> List[Path]:
    """Columnar .npz, long-format CSV (t, theta, F, G) and a JSON header."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {"t": tables.t, "theta": tables.theta, "eta": tables.eta, "eta_t": tables.eta_t,
              "scaled_F": tables.scaled_F, "G": tables.G}
    if tables.scaled_F_from_eta is not None:
        arrays["scaled_F_from_eta"] = tables.scaled_F_from_eta
        arrays["G_from_eta"] = tables.G_from_eta
    npz_path = directory / f"{stem}.npz"
    np.savez(npz_path, **arrays)

    csv_path = directory / f"{stem}.csv"
    F = tables.F
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "theta", "F", "G"])
        for i, t_value in enumerate(tables.t):
            for j, theta_value in enumerate(tables.theta):
                writer.writerow(["%.17g" % t_value, "%.17g" % theta_value, "%.17g" % F[i, j], "%.17g" % tables.G[i, j]])

    header_path = directory / f"{stem}_header.json"
    header_path.write_text(json.dumps(tables.header().model_dump(mode="json"), indent=2, sort_keys=True))
    logger.info(f"Kernel tables written to {directory}")
    return [npz_path, csv_path, header_path]


def load_tables(directory: Union[str, Path], stem: str = "kernel") -> KernelTables:
    directory = Path(directory)
    header = KernelHeader.model_validate_json((directory / f"{stem}_header.json").read_text())
    with np.load(directory / f"{stem}.npz") as data:
        arrays = {key: data[key] for key in data.files}
    return KernelTables(cutoff=header.cutoff, quad_epsabs=header.quad_epsabs, path_rtol=header.path_rtol, **arrays)
