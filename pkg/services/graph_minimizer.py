# services/graph_minimizer.py
"""
Graph Minimizer Service
Area of Lagrangian graphs y = grad u(x) over a square, its exact discrete
gradient, an L-BFGS / Armijo descent, and the Euler-Lagrange and
Lagrangian-angle diagnostics.

Nodes sit at x0 + (i - 1/2) h for i = 0..n+1. The Hessian is taken by 9-point
central stencils at the n x n cell centres 1..n, and the area is the midpoint
sum of sqrt(det(I + H^2)) h^2 over those cells. The two outermost node layers
on every side are fixed.
"""
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple
import logging

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu, spsolve

from config.settings import settings
from models.graph import MinimizerConfig, MinimizerSummary, StepRecord
from services.exceptions import DegenerateMetricError, DomainError, LineSearchError
from services.immersion import SampledImmersion

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
FIXED_LAYERS = 2


@dataclass
class GraphField:
    """Potential u on the (n + 2) x (n + 2) node grid of a square."""
    values: np.ndarray
    h: float
    x0: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise DomainError(f"Graph fields live on square node grids, got {self.values.shape}")
        if self.n < 5:
            raise DomainError("The grid needs at least 5 x 5 cells")

    @property
    def n(self) -> int:
        return self.values.shape[0] - 2

    @property
    def axis(self) -> Tuple[np.ndarray, np.ndarray]:
        i = np.arange(self.n + 2) - 0.5
        return self.x0[0] + i * self.h, self.x0[1] + i * self.h

    @property
    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(*self.axis, indexing="ij")

    @property
    def domain_area(self) -> float:
        return (self.n * self.h) ** 2

    def free_mask(self) -> np.ndarray:
        mask = np.zeros(self.values.shape, dtype=bool)
        mask[FIXED_LAYERS:-FIXED_LAYERS, FIXED_LAYERS:-FIXED_LAYERS] = True
        return mask

    def with_values(self, values: np.ndarray) -> "GraphField":
        return GraphField(values=np.asarray(values, dtype=float).reshape(self.values.shape), h=self.h, x0=self.x0)

    @classmethod
    def from_function(cls, function: Callable[[np.ndarray, np.ndarray], np.ndarray], cells: int,
                      lower: Tuple[float, float] = (0.0, 0.0), length: float = 1.0) -> "GraphField":
        h = length / cells
        i = np.arange(cells + 2) - 0.5
        x1, x2 = np.meshgrid(lower[0] + i * h, lower[1] + i * h, indexing="ij")
        return cls(values=function(x1, x2), h=h, x0=lower)


# --- Stencil operators ---

@dataclass
class GraphOperators:
    """Sparse Hessian stencils D11, D12, D22 from all nodes to the cell centres."""
    n: int
    h: float
    d11: sps.csr_matrix = field(init=False)
    d12: sps.csr_matrix = field(init=False)
    d22: sps.csr_matrix = field(init=False)
    free: np.ndarray = field(init=False)

    def __post_init__(self):
        n, h = self.n, self.h
        shape = (n, n + 2)
        second = sps.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=shape) / (h * h)
        central = sps.diags([-1.0, 1.0], [0, 2], shape=shape) / (2.0 * h)
        select = sps.diags([1.0], [1], shape=shape)
        self.d11 = sps.kron(second, select, format="csr")
        self.d22 = sps.kron(select, second, format="csr")
        self.d12 = sps.kron(central, central, format="csr")
        mask = np.zeros((n + 2, n + 2), dtype=bool)
        mask[FIXED_LAYERS:-FIXED_LAYERS, FIXED_LAYERS:-FIXED_LAYERS] = True
        self.free = np.flatnonzero(mask.ravel())

    def hessian(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float).ravel()
        return self.d11 @ u, self.d12 @ u, self.d22 @ u

    def excess(self, u: np.ndarray) -> float:
        """Area minus the domain area, summed without cancellation."""
        a, b, c = self.hessian(u)
        return float(np.sum(_excess_density(a, b, c))) * self.h * self.h

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Exact gradient of the discrete area with respect to every node value."""
        a, b, c = self.hessian(u)
        f = _density(a, b, c)
        p, q = 1.0 - a * c + b * b, a + c
        f_a = (q - c * p) / f
        f_c = (q - a * p) / f
        f_b = 2.0 * b * p / f
        return (self.d11.T @ f_a + self.d12.T @ f_b + self.d22.T @ f_c) * self.h * self.h

    def excess_change(self, hessian: Tuple[np.ndarray, ...], increment: Tuple[np.ndarray, ...]) -> Tuple[float, float]:
        """
        Excess area after adding a Hessian increment minus the excess before,
        formed cell by cell from the increment so that small changes keep their
        relative accuracy.

        Returns:
            (change, sum of absolute cell changes), both times h^2
        """
        a, b, c = hessian
        da, db, dc = increment
        p, q = 1.0 - a * c + b * b, a + c
        dp = db * (2.0 * b + db) - (a * dc + c * da + da * dc)
        dq = da + dc
        cells = (dp * (2.0 * p + dp) + dq * (2.0 * q + dq)) / (np.hypot(p, q) + np.hypot(p + dp, q + dq))
        h2 = self.h * self.h
        return float(np.sum(cells)) * h2, float(np.sum(np.abs(cells))) * h2

    def linearized(self) -> sps.csr_matrix:
        """Hessian of the area at u = 0: h^2 (D11^T D11 + 2 D12^T D12 + D22^T D22)."""
        k = self.d11.T @ self.d11 + 2.0 * (self.d12.T @ self.d12) + self.d22.T @ self.d22
        return (k * self.h * self.h).tocsr()


def _density(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """sqrt(det(I + H^2)) = |det(I + iH)| for H = [[a, b], [b, c]]."""
    return np.hypot(1.0 - a * c + b * b, a + c)


def _excess_density(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    det_term = b * b - a * c
    return (a * a + c * c + 2.0 * b * b + det_term * det_term) / (_density(a, b, c) + 1.0)


_operators: Dict[Tuple[int, float], GraphOperators] = {}


def get_operators(n: int, h: float) -> GraphOperators:
    key = (n, h)
    if key not in _operators:
        _operators[key] = GraphOperators(n, h)
    return _operators[key]


# --- Functional ---

def area(u: GraphField) -> float:
    return u.domain_area + excess_area(u)


def excess_area(u: GraphField) -> float:
    return get_operators(u.n, u.h).excess(u.values)


def area_gradient(u: GraphField) -> np.ndarray:
    """Gradient on the node grid, zero on the fixed band."""
    ops = get_operators(u.n, u.h)
    full = ops.gradient(u.values)
    out = np.zeros(full.shape)
    out[ops.free] = full[ops.free]
    return out.reshape(u.values.shape)


def linearized_operator(u: GraphField) -> sps.csr_matrix:
    return get_operators(u.n, u.h).linearized()


def biharmonic_extension(u: GraphField) -> GraphField:
    """Minimizer of the linearized area with the band of u: K_ff u_f = -K_fb u_b."""
    ops = get_operators(u.n, u.h)
    k = ops.linearized()
    free = ops.free
    fixed = np.setdiff1d(np.arange(k.shape[0]), free)
    values = u.values.ravel().copy()
    rhs = -(k[free][:, fixed] @ values[fixed])
    values[free] = spsolve(k[free][:, free].tocsc(), rhs)
    return u.with_values(values)


# --- Minimizer ---

@dataclass
class MinimizerState:
    solution: GraphField
    area: float
    excess: float
    grad_norm: float
    iterations: int = 0
    converged: bool = False
    roundoff_stall: bool = False
    history: List[StepRecord] = field(default_factory=list)

    def summary(self, seed: Optional[int] = None) -> MinimizerSummary:
        return MinimizerSummary(
            cells=[self.solution.n, self.solution.n], spacing=self.solution.h, iterations=self.iterations,
            converged=self.converged, roundoff_stall=self.roundoff_stall, final_area=self.area,
            final_grad_norm=self.grad_norm, seed=seed,
        )


def _two_loop(gradient: np.ndarray, pairs: deque, initial: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    q = gradient.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        alpha = rho * float(s @ q)
        q -= alpha * y
        alphas.append(alpha)
    r = initial(q)
    for (s, y, rho), alpha in zip(pairs, reversed(alphas)):
        beta = rho * float(y @ r)
        r += s * (alpha - beta)
    return r


class GraphMinimizerService:
    """Descent on the discrete area with the fixed two-layer band."""

    def __init__(self, config: Optional[MinimizerConfig] = None):
        self.config = config or MinimizerConfig()

    def minimize(self, u0: GraphField) -> MinimizerState:
        """
        Minimize the discrete area over the free nodes.

        Args:
            u0: initial field; its two outer layers are the boundary band

        Returns:
            MinimizerState with the accepted-step history

        Raises:
            LineSearchError: sufficient decrease not reached above min_step
        """
        cfg = self.config
        ops = get_operators(u0.n, u0.h)
        free = ops.free
        h2 = u0.h * u0.h
        values = u0.values.ravel().copy()

        excess = ops.excess(values)
        hessian = ops.hessian(values)
        grad = ops.gradient(values)[free]
        state = MinimizerState(solution=u0.with_values(values), area=u0.domain_area + excess, excess=excess,
                               grad_norm=float(np.max(np.abs(grad))) / h2)
        if state.grad_norm <= cfg.tol:
            state.converged = True
            logger.info("Initial field is already stationary")
            return state

        if cfg.preconditioned:
            factor = splu(ops.linearized()[free][:, free].tocsc())
            initial = factor.solve
        else:
            initial = lambda q: q / h2
        pairs: deque = deque(maxlen=cfg.history)
        full_direction = np.zeros_like(values)

        for iteration in range(1, cfg.max_iter + 1):
            direction = -(_two_loop(grad, pairs, initial) if cfg.quasi_newton else initial(grad))
            slope = float(grad @ direction)
            if slope >= 0.0:
                pairs.clear()
                direction = -initial(grad)
                slope = float(grad @ direction)
            full_direction[free] = direction
            direction_hessian = ops.hessian(full_direction)

            # the change is resolved to roughly EPS times the sum of |cell changes|
            step, accepted, stalled = 1.0, False, False
            while step >= cfg.min_step:
                change, scale = ops.excess_change(hessian, tuple(step * d for d in direction_hessian))
                if change <= cfg.armijo * step * slope:
                    accepted = True
                    break
                if step * abs(slope) < 100.0 * EPS * scale:
                    stalled = True
                    break
                step *= cfg.shrink

            if not accepted:
                state.solution = u0.with_values(values)
                if stalled:
                    state.roundoff_stall = True
                    logger.warning(f"Descent stalled at roundoff after {state.iterations} steps, "
                                   f"gradient {state.grad_norm:.3e}")
                    return state
                logger.error(f"Line search failed at iteration {iteration}")
                raise LineSearchError(f"No sufficient decrease above step {cfg.min_step}", state=state)

            trial = values.copy()
            trial[free] += step * direction
            new_grad = ops.gradient(trial)[free]
            s_vec, y_vec = trial[free] - values[free], new_grad - grad
            curvature = float(s_vec @ y_vec)
            if curvature > 0.0:
                pairs.append((s_vec, y_vec, 1.0 / curvature))
            values, excess, grad = trial, excess + change, new_grad
            hessian = ops.hessian(values)

            state.iterations = iteration
            state.excess = excess
            state.area = u0.domain_area + excess
            state.grad_norm = float(np.max(np.abs(grad))) / h2
            state.history.append(StepRecord(iteration=iteration, step=step, area=state.area,
                                            excess_area=excess, grad_norm=state.grad_norm))
            if state.grad_norm <= cfg.tol:
                state.converged = True
                break

        state.solution = u0.with_values(values)
        logger.info(f"Minimizer finished after {state.iterations} steps: area {state.area:.15f}, "
                    f"gradient {state.grad_norm:.3e}, converged {state.converged}")
        return state


def minimize(u0: GraphField, config: Optional[MinimizerConfig] = None) -> MinimizerState:
    return GraphMinimizerService(config).minimize(u0)


# --- Diagnostics ---

def _metric_terms(a: np.ndarray, b: np.ndarray, c: np.ndarray):
    """sqrt(det mu), mu^-1 and W = sqrt(det mu) mu^-1 H for mu = I + H^2."""
    mu11, mu12, mu22 = 1.0 + a * a + b * b, b * (a + c), 1.0 + b * b + c * c
    det = mu11 * mu22 - mu12 * mu12
    bad = np.flatnonzero(det <= settings.DEGENERACY_THRESHOLD)
    if bad.size:
        node = tuple(int(i) for i in np.unravel_index(bad[0], det.shape))
        raise DegenerateMetricError("Induced metric is degenerate", node=node)
    root = np.sqrt(det)
    inv11, inv12, inv22 = mu22 / det, -mu12 / det, mu11 / det
    w11 = root * (inv11 * a + inv12 * b)
    w12 = root * (inv11 * b + inv12 * c)
    w22 = root * (inv12 * b + inv22 * c)
    return root, (inv11, inv12, inv22), (w11, w12, w22)


def _cell_grids(u: GraphField) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    ops = get_operators(u.n, u.h)
    return tuple(x.reshape(u.n, u.n) for x in ops.hessian(u.values))


def _d(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Central difference on interior entries; drops one layer on each side."""
    if axis == 0:
        return (values[2:, 1:-1] - values[:-2, 1:-1]) / (2.0 * h)
    return (values[1:-1, 2:] - values[1:-1, :-2]) / (2.0 * h)


def _inner(values: np.ndarray) -> np.ndarray:
    return values[1:-1, 1:-1]


def el_residual(u: GraphField) -> np.ndarray:
    """
    sum_k D_k(Delta_mu u_k) with the Laplace-Beltrami operator in divergence
    form, on cell centres 3..n-2.
    """
    if u.n < 6:
        raise DomainError("el_residual needs at least 4 interior layers")
    a, b, c = _cell_grids(u)
    root, _, (w11, w12, w22) = _metric_terms(a, b, c)
    h = u.h
    lap_u1 = (_d(w11, h, 0) + _d(w12, h, 1)) / _inner(root)
    lap_u2 = (_d(w12, h, 0) + _d(w22, h, 1)) / _inner(root)
    return _d(lap_u1, h, 0) + _d(lap_u2, h, 1)


def stationarity_residual(u: GraphField) -> np.ndarray:
    """Exact first variation sum D_i D_k W_ik, i.e. the gradient divided by h^2, on the free nodes."""
    grad = area_gradient(u) / (u.h * u.h)
    return grad[FIXED_LAYERS:-FIXED_LAYERS, FIXED_LAYERS:-FIXED_LAYERS]


def lagrangian_angle_field(u: GraphField) -> Tuple[np.ndarray, np.ndarray]:
    """
    beta = arctan(l1) + arctan(l2) for the Hessian eigenvalues, and Delta_mu beta.

    Returns:
        (beta on cell centres 1..n, residual on cell centres 3..n-2)
    """
    a, b, c = _cell_grids(u)
    beta = np.arctan2(a + c, 1.0 - a * c + b * b)
    root, (inv11, inv12, inv22), _ = _metric_terms(a, b, c)
    h = u.h
    beta_1, beta_2 = _d(beta, h, 0), _d(beta, h, 1)
    flux_1 = _inner(root) * (_inner(inv11) * beta_1 + _inner(inv12) * beta_2)
    flux_2 = _inner(root) * (_inner(inv12) * beta_1 + _inner(inv22) * beta_2)
    residual = (_d(flux_1, h, 0) + _d(flux_2, h, 1)) / root[2:-2, 2:-2]
    return beta, residual


def graph_immersion(u: GraphField) -> SampledImmersion:
    """(x, grad u) on the cell centres with the Legendrian lift phi = x . grad u - 2u."""
    x1, x2 = (axis[1:-1] for axis in u.axis)
    grid1, grid2 = np.meshgrid(x1, x2, indexing="ij")
    u1 = _d(u.values, u.h, 0)
    u2 = _d(u.values, u.h, 1)
    inner = _inner(u.values)
    points = np.stack([grid1, u1, grid2, u2], axis=-1)
    phi = grid1 * u1 + grid2 * u2 - 2.0 * inner
    return SampledImmersion(points=points, spacings=(u.h, u.h), phi=phi)


def window(values: np.ndarray, u: GraphField, offset: int, radius: float) -> np.ndarray:
    """Entries of a centred-cell field whose nodes lie within radius of the square's centre (sup norm)."""
    x1, x2 = u.mesh
    centre = (u.x0[0] + 0.5 * u.n * u.h, u.x0[1] + 0.5 * u.n * u.h)
    size = values.shape[0]
    sl = slice(offset, offset + size)
    inside = np.maximum(np.abs(x1[sl, sl] - centre[0]), np.abs(x2[sl, sl] - centre[1])) <= radius
    return values[inside]


def minimizer_diagnostics(state: MinimizerState) -> MinimizerSummary:
    summary = state.summary()
    u = state.solution
    summary.el_residual = float(np.max(np.abs(el_residual(u))))
    summary.stationarity_residual = float(np.max(np.abs(stationarity_residual(u))))
    summary.angle_residual = float(np.max(np.abs(lagrangian_angle_field(u)[1])))
    return summary
