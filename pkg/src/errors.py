"""
Exception hierarchy shared by the toolkit.

The CLI maps ``ConfigurationError`` to exit code 2 and ``NumericalError``
to exit code 1.
"""
from typing import Any, Optional


class RFMRError(Exception):
    """Base class for toolkit errors."""
    pass


class ConfigurationError(RFMRError, ValueError):
    """Invalid inputs: dimensions, rates, states outside the cube, ordering."""
    pass


class DomainError(ConfigurationError):
    """A closed form or operation was called outside its precondition."""
    pass


class NumericalError(RFMRError):
    """A computation ran but did not produce a trustworthy result."""
    pass


class IntegrationError(NumericalError):
    """Integration failed; ``partial`` holds whatever was computed."""

    def __init__(self, message: str, partial: Optional[Any] = None):
        super().__init__(message)
        self.partial = partial


class ConservationError(IntegrationError):
    """Total occupancy drifted beyond the conservation tolerance."""
    pass


class SettleTimeoutError(NumericalError):
    """The horizon ran out before the vector field fell below the settle tolerance."""

    def __init__(self, message: str, best_state: Any = None, elapsed: float = 0.0,
                 field_norm: float = float("inf")):
        super().__init__(message)
        self.best_state = best_state
        self.elapsed = elapsed
        self.field_norm = field_norm


class EquilibriumSolverError(NumericalError):
    """Damped Newton and the integration fallback both failed."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
