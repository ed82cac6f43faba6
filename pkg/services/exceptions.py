# services/exceptions.py
"""
Domain errors raised by the geometry, stability, kernel and minimizer services.
"""
from typing import Any, Dict, Optional


class ConeToolkitError(Exception):
    """Base class for every error raised by the toolkit services"""


class DomainError(ConeToolkitError):
    """Argument outside the region where an operation is defined"""


class DegenerateMetricError(ConeToolkitError):
    """Induced metric determinant fell below the degeneracy threshold"""

    def __init__(self, message: str, node: Optional[tuple] = None):
        super().__init__(message)
        self.node = node


class NonLagrangianError(ConeToolkitError):
    pass


class BranchTrackingError(ConeToolkitError):
    """Consecutive Lagrangian-angle samples jumped by more than the allowed limit"""


class NotClosedCurveError(ConeToolkitError):
    pass


class SupportViolationError(ConeToolkitError):
    """Variation field does not vanish on the required boundary layers"""


class QuadratureError(ConeToolkitError):
    pass


class InadmissibleModeError(ConeToolkitError):
    pass


class WindowEmptyError(ConeToolkitError):
    pass


class CertificationError(ConeToolkitError):
    """Instability could not be certified down to the smallest allowed scale"""

    def __init__(self, message: str, best_value: Optional[float] = None):
        super().__init__(message)
        self.best_value = best_value


class TripwireError(ConeToolkitError):
    """A property that holds analytically failed numerically"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PathDisagreementError(TripwireError):
    pass


class LineSearchError(ConeToolkitError):
    """Armijo backtracking exhausted; carries the last accepted state"""

    def __init__(self, message: str, state: Any = None):
        super().__init__(message)
        self.state = state
