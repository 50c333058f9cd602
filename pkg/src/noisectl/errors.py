"""Exception hierarchy shared by every noisectl module.

Each class maps onto one CLI exit code (see :mod:`noisectl.cli`).
"""


class NoisectlError(Exception):
    """Base class for all library errors."""


class DomainError(NoisectlError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(NoisectlError, ValueError):
    """A parameter or document failed validation.

    ``field`` names the offending parameter (or a dotted path into a
    document) when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.detail = message
        self.field = field


class NumericError(NoisectlError, ArithmeticError):
    """A numerical routine failed (non-finite values, no convergence)."""

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{message} (at {where!r})")
        self.where = where


class DivergenceError(NumericError):
    """An integrated trajectory blew up; ``where`` is the last valid time or step."""


class SingularScheduleError(ValidationError):
    """A closed-form schedule has a vanishing denominator on its horizon."""


class CoverageError(NoisectlError, ValueError):
    """A score-translation target SNR is outside what the source schedule covers."""

    def __init__(self, message, snr_range=None, offending=None):
        super().__init__(message)
        self.snr_range = snr_range
        self.offending = offending or []


class InfeasibleError(ValidationError):
    """Hyperparameters violate one or more admissibility constraints.

    ``violations`` is a list of ``(constraint_name, detail)`` pairs.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        names = ", ".join(name for name, _ in self.violations)
        super().__init__(f"infeasible hyperparameters; violated: {names}")
        self.field = self.violations[0][0] if self.violations else None


class ResolutionError(NumericError):
    """A sampled trajectory is too coarse for finite differencing."""
