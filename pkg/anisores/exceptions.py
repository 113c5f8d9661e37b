from __future__ import annotations

from typing import List, Optional


class AnisoresError(Exception):
    """Base exception for anisores."""

    def __init__(
        self,
        message: str,
        *,
        stage: Optional[str] = None,
        key_path: Optional[str] = None,
    ):
        self.stage = stage
        self.key_path = key_path
        super().__init__(message)


class InvalidParameterError(AnisoresError):
    """Raised when a numerical parameter is outside its admissible range."""

    pass


class ConfigError(AnisoresError):
    """Raised when a run configuration fails validation."""

    def __init__(
        self,
        message: str,
        *,
        violations: Optional[List[str]] = None,
        stage: Optional[str] = None,
        key_path: Optional[str] = None,
    ):
        self.violations = list(violations or [])
        super().__init__(message, stage=stage, key_path=key_path)


class GeometryError(AnisoresError):
    """Raised when a cone configuration violates an ensemble invariant."""

    def __init__(
        self,
        message: str,
        *,
        invariant: str,
        stage: Optional[str] = None,
    ):
        self.invariant = invariant
        super().__init__(message, stage=stage)


class ResolutionError(AnisoresError):
    """Raised when a grid is too coarse or has the wrong shape for an FFT contract."""

    pass


class InvalidTimeError(AnisoresError):
    """Raised when a map backend is asked for a non-integer time."""

    pass


class ConvergenceError(AnisoresError):
    """Raised when an iteration fails to reach its residual target."""

    def __init__(
        self,
        message: str,
        *,
        residual: float,
        stage: Optional[str] = None,
    ):
        self.residual = residual
        super().__init__(message, stage=stage)


class PreconditionError(AnisoresError):
    """Raised when the hypotheses of an estimate are not met."""

    pass


class SingularDifferentialError(AnisoresError):
    """Raised when a differential sample is not invertible."""

    pass


class DivergentIntegralError(AnisoresError):
    """Raised when a Laplace integral is requested left of the growth bound."""

    pass


class ConditioningError(AnisoresError):
    """Raised when a biorthogonalization is numerically ill-conditioned."""

    def __init__(
        self,
        message: str,
        *,
        condition: float,
        stage: Optional[str] = None,
    ):
        self.condition = condition
        super().__init__(message, stage=stage)


class SearchError(AnisoresError):
    """Raised when a leaf search leaves its horizon."""

    def __init__(
        self,
        message: str,
        *,
        horizon: float,
        stage: Optional[str] = None,
    ):
        self.horizon = horizon
        super().__init__(message, stage=stage)


class NonMixingModelError(AnisoresError):
    """Raised when a non-mixing model is used where mixing is assumed."""

    pass


class QuadratureError(AnisoresError):
    """Raised when adaptive quadrature fails to meet its tolerance."""

    def __init__(
        self,
        message: str,
        *,
        worst_panel: Optional[tuple] = None,
        stage: Optional[str] = None,
    ):
        self.worst_panel = worst_panel
        super().__init__(message, stage=stage)


class HypothesisError(AnisoresError):
    """Raised when an oscillatory integral has a stationary point on the amplitude support."""

    pass


class DependencyError(AnisoresError):
    """Raised when a computation is missing upstream data."""

    pass


class SolverError(AnisoresError):
    """Raised when a root bracket cannot be established."""

    pass


class UnknownSeriesError(AnisoresError):
    """Raised when a plot series is not present in a result store."""

    def __init__(
        self,
        message: str,
        *,
        available: Optional[List[str]] = None,
        stage: Optional[str] = None,
    ):
        self.available = list(available or [])
        super().__init__(message, stage=stage)
