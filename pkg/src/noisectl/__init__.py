"""noisectl: noise-schedule design for diffusion samplers by optimal control."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CoverageError,
    DivergenceError,
    DomainError,
    InfeasibleError,
    NoisectlError,
    NumericError,
    ResolutionError,
    SingularScheduleError,
    ValidationError,
)
from .numerics import UNBOUNDED, OdeGrid, QuadratureSpec, lambert_w0, parallel_sum  # noqa: E402

__all__ = [
    "__version__",
    "UNBOUNDED",
    "OdeGrid",
    "QuadratureSpec",
    "lambert_w0",
    "parallel_sum",
    "NoisectlError",
    "DomainError",
    "ValidationError",
    "NumericError",
    "DivergenceError",
    "SingularScheduleError",
    "CoverageError",
    "InfeasibleError",
    "ResolutionError",
]
