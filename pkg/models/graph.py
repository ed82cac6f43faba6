# models/graph.py
from typing import List, Optional

from pydantic import BaseModel, Field

from config.settings import settings


class MinimizerConfig(BaseModel):
    tol: float = Field(settings.GRAPH_TOL, gt=0, description="Sup norm of the scaled gradient at convergence.")
    max_iter: int = Field(settings.GRAPH_MAX_ITER, ge=0)
    quasi_newton: bool = Field(True, description="Use the L-BFGS two-loop direction.")
    preconditioned: bool = Field(True, description="Seed the L-BFGS recursion with the linearized operator.")
    history: int = Field(settings.GRAPH_HISTORY, ge=1)
    armijo: float = Field(1e-4, gt=0, lt=1)
    shrink: float = Field(0.5, gt=0, lt=1)
    min_step: float = Field(1e-20, gt=0)


class StepRecord(BaseModel):
    iteration: int
    step: float
    area: float
    excess_area: float
    grad_norm: float


class MinimizerSummary(BaseModel):
    cells: List[int]
    spacing: float
    iterations: int
    converged: bool
    roundoff_stall: bool = Field(False, description="Stopped because further decrease is below roundoff.")
    final_area: float
    final_grad_norm: float
    el_residual: Optional[float] = None
    stationarity_residual: Optional[float] = None
    angle_residual: Optional[float] = None
    seed: Optional[int] = None
