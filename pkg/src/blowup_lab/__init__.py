"""Numerical laboratory for lifespan estimates of radial semilinear wave equations
with gradient nonlinearity |u_r|^p: ODI iteration ladders and sharp constants,
blow-up integration of the model ODEs, a radial wave solver and the weighted
front functional used to bound the lifespan."""

from .fitting import FitError, FitResult, fit_line
from .odi import (
    CriticalOdiParams,
    DomainError,
    IterationLadder,
    ParameterError,
    SharpConstants,
    SubcriticalOdiParams,
    critical_exponent,
    critical_ladder,
    predict_lifespan_critical,
    predict_lifespan_subcritical,
    sharp_constants,
    subcritical_ladder,
    theorem_constants,
)

__version__ = "0.1.0"
