# models/report.py
import hashlib
import json
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from config.settings import settings


class RunOptions(BaseModel):
    """Flag values shared by every CLI command; None means the command's default."""
    p: Optional[int] = Field(None, ge=1)
    q: Optional[int] = Field(None, ge=1)
    k: Optional[int] = Field(None, ge=1, description="Cover multiplicity, or the largest one in a scan.")
    pq_max: int = Field(settings.PQ_MAX, ge=2)
    modes: int = Field(settings.MODE_MAX, ge=0)
    eps: Optional[float] = Field(None, gt=0, description="Band amplitude of the graph problem.")
    c: float = Field(settings.KERNEL_C, gt=0)
    grid: Optional[Tuple[int, int]] = Field(None, description="Kernel t x theta nodes, or graph cells.")
    seed: Optional[int] = None
    tol: Optional[float] = Field(None, gt=0)


class RunManifest(BaseModel):
    command: str = Field(..., description="CLI command name.")
    parameters: Dict[str, Any] = Field(default_factory=dict)
    seeds: Dict[str, int] = Field(default_factory=dict)
    tolerances: Dict[str, float] = Field(default_factory=dict)
    code_version: str = settings.CODE_VERSION
    schema_version: str = settings.SCHEMA_VERSION
    outputs: List[str] = Field(default_factory=list)

    def digest(self) -> str:
        """Hash of everything that determines the numeric outputs."""
        payload = self.model_dump(mode="json", exclude={"outputs"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Report(BaseModel):
    schema_version: str = settings.SCHEMA_VERSION
    manifest: RunManifest
    records: Dict[str, Any] = Field(default_factory=dict)
    failures: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures
