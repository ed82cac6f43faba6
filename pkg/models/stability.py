# models/stability.py
from fractions import Fraction
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.cone import ConeSpec

Verdict = Literal["negative-direction-found", "nonnegative-on-bank", "window-empty", "not-certified"]


class ModeSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    numerator: int = Field(..., ge=0, description="Numerator of the angular frequency l.")
    denominator: int = Field(1, ge=1, description="Denominator of l; must divide the cover multiplicity.")
    parity: Literal["cos", "sin", "both"] = "both"

    @model_validator(mode="before")
    @classmethod
    def _reduce(cls, data):
        if isinstance(data, dict) and int(data.get("denominator", 1)) >= 1:
            frac = Fraction(int(data.get("numerator", 0)), int(data.get("denominator", 1)))
            data = {**data, "numerator": frac.numerator, "denominator": frac.denominator}
        return data

    @classmethod
    def from_fraction(cls, ell, parity: str = "both") -> "ModeSpec":
        frac = Fraction(ell)
        return cls(numerator=frac.numerator, denominator=frac.denominator, parity=parity)

    @property
    def ell(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    @property
    def value(self) -> float:
        return self.numerator / self.denominator

    def admissible_for(self, spec: ConeSpec) -> bool:
        return (self.numerator * spec.k) % self.denominator == 0

    def __str__(self) -> str:
        return str(self.ell)


class StabilityCertificate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    spec: ConeSpec
    mode: ModeSpec
    verdict: Verdict
    value: Optional[float] = Field(None, description="mode_radial_form value (without prefactor).")
    error_estimate: Optional[float] = Field(None, description="Richardson estimate of the Simpson error.")
    prefactor: Optional[float] = None
    eps: Optional[float] = Field(None, description="Inner scale of the three-piece profile (0.0 once it underflows).")
    log_eps: Optional[float] = Field(None, description="Natural log of the inner scale.")
    mass: Optional[float] = Field(None, description="Coefficient of log(1/eps) in the form value.")
    profile_hash: Optional[str] = None
    seed: Optional[int] = None
    profile: Optional[Any] = Field(None, exclude=True, description="RadialProfile behind the value.")


class StabilityRow(BaseModel):
    """One line of the stability scan table."""
    p: int
    q: int
    k: int
    ell: str
    value: Optional[float]
    verdict: Verdict
