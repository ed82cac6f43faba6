# models/kernel.py
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from config.settings import settings


class CutoffSpec(BaseModel):
    c: float = Field(..., description="Cutoff offset; c + log(1/2) must exceed 2*pi*e^(pi/2).")
    tau: float = Field(..., description="Quarter length (c + log 1/2)/4 of the linear ramp.")
    t0: float = Field(..., description="Symmetry centre of the cutoff, alpha(t0) = 1/2.")
    half_width: float = Field(..., description="Mollifier half-width w = tau/2.")
    ramp_start: float = Field(..., description="Left kink of the piecewise-linear ramp before smoothing.")
    ramp_end: float = Field(..., description="Right kink of the piecewise-linear ramp before smoothing.")
    lam: float = Field(..., description="Far-left asymptote: zeta = 1 - lam*e^t for t <= -c.")
    lam_first_reading: float = Field(..., description="Same asymptote written as zeta = 1 - 2*lam1*e^t (lam1 = lam/2).")


class KernelHeader(BaseModel):
    schema_version: str = settings.SCHEMA_VERSION
    code_version: str = settings.CODE_VERSION
    cutoff: CutoffSpec
    t_min: float
    t_max: float
    t_nodes: int
    theta_nodes: int
    quad_epsabs: float
    path_rtol: float
    columns: List[str] = Field(default_factory=lambda: ["t", "theta", "eta", "F", "G"])


class WaveReport(BaseModel):
    wave_residual: float = Field(..., description="max |eta_tt - eta_thth - 2 eta_t| / max|eta| on the interior.")
    companion_residual: float = Field(..., description="Same residual for 1 - G, relative.")
    companion_initial: Optional[float] = Field(None, description="Initial data of e^(-t) (1 - G) against e^(-t) alpha(2 t0 - t) and 0, scaled by e^t.")
    symmetry_defect: float = Field(..., description="max |1 - alpha(t) - alpha(2 t0 - t)|.")
    path_deviation_F: float
    path_deviation_G: float
    far_left_eta: Optional[float] = None
    far_left_F: Optional[float] = None
    far_left_G: Optional[float] = None
    far_right: Optional[float] = None
    normalization: float = Field(..., description="| integral of e^t psi dt - 1/2 |")
    initial_data: Optional[float] = Field(None, description="max |eta_theta(t, 0) - zeta(t)| by central differences.")
    cosine_identity: Optional[float] = Field(None, description="max |cos(theta) - 1 - 1/2 integral of d/dtheta J0|.")


class KernelBoundsReport(BaseModel):
    f_min: float
    g_min: float
    g_max: float
    theta0: float = Field(..., description="Largest ratio b/a = exp(-shift/2) with shift monotonicity.")
    shift_steps: int
    tolerance: float
    passed: bool
    failures: List[str] = Field(default_factory=list)
    wave: Optional[WaveReport] = None


class IdentityReport(BaseModel):
    """Residuals of the tangential identities on a lifted surface."""
    divergence_theta: float
    divergence_t: float
    gradient_sum: float
    relative_scale: float = Field(..., description="max 2/s~ over the surface, used to normalize residuals.")
    legendrian_defect: float
    nodes: int


class DensityRecord(BaseModel):
    spec: str
    a: float
    ratio: float
    extra: Dict[str, float] = Field(default_factory=dict)


class LieCheckReport(BaseModel):
    """d/dtau (flow* alpha) against -2 h_phi (flow* alpha) on the basis vectors."""
    expression: str
    tau: float
    step: float
    defect: float = Field(..., description="max |lhs - rhs| / max(1, max |flow* alpha|).")
    h_phi: float
