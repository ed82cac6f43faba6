# models/cone.py
import math
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.settings import settings

# --- Cone Specification ---
class ConeSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: int = Field(..., ge=1, description="First winding frequency of the link.")
    q: int = Field(..., ge=1, description="Second winding frequency of the link.")
    k: int = Field(1, ge=1, description="Cover multiplicity.")

    @model_validator(mode="after")
    def _check_coprime(self):
        if math.gcd(self.p, self.q) != 1:
            raise ValueError(
                f"(p, q) = ({self.p}, {self.q}) is not admissible: the Hamiltonian-stationary "
                "cone family is parameterized by pairs of relatively prime integers"
            )
        return self

    @property
    def a(self) -> float:
        return (self.p - self.q) / (2.0 * math.sqrt(self.p * self.q))

    @property
    def length(self) -> float:
        return 2.0 * math.pi * self.k * math.sqrt(self.p * self.q)

    @property
    def period(self) -> float:
        """Length of one traversal of the link."""
        return 2.0 * math.pi * math.sqrt(self.p * self.q)

    @property
    def maslov(self) -> int:
        return self.p - self.q

    @property
    def density(self) -> float:
        return self.k * math.sqrt(self.p * self.q)

    @property
    def knotted(self) -> bool:
        return self.p > 1 and self.q > 1

    def descriptor(self) -> "ConeDescriptor":
        return ConeDescriptor(
            p=self.p, q=self.q, k=self.k, a=self.a, length=self.length,
            maslov=self.maslov, density=self.density, knotted=self.knotted,
        )


class ConeDescriptor(BaseModel):
    schema_version: str = Field(settings.SCHEMA_VERSION, description="Report schema version.")
    p: int
    q: int
    k: int
    a: float = Field(..., description="Half slope of the Lagrangian angle along the link.")
    length: float = Field(..., description="Arclength of the (covered) link.")
    maslov: int
    density: float = Field(..., description="Density at the vertex, k*sqrt(pq).")
    knotted: bool = Field(False, description="Candidate torus knot flag (p > 1 and q > 1).")


# --- Validation ---
class ValidationReport(BaseModel):
    spec: ConeSpec
    n_samples: int
    unit_norm: float = Field(..., description="max | |gamma| - 1 |")
    unit_speed: float = Field(..., description="max | |gamma'| - 1 |")
    legendrian: float = Field(..., description="max |<J gamma, gamma'>|")
    first_order_system: float = Field(..., description="max residual of the first-order link system")
    angle_identity: float = Field(..., description="max |gamma1 gamma2' - gamma2 gamma1' - exp(2ias)|")
    closure: float
    angle_slope: float = Field(..., description="least-squares slope of the unwrapped angle minus 2a")
    maslov_winding: int
    tolerance: float

    @property
    def max_defect(self) -> float:
        return max(self.unit_norm, self.unit_speed, self.legendrian, self.first_order_system,
                   self.angle_identity, self.closure, self.angle_slope)

    @property
    def passed(self) -> bool:
        return self.max_defect <= self.tolerance and self.maslov_winding == self.spec.maslov
