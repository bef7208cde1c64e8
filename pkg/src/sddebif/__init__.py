"""Bifurcation analysis of u'(t) = alpha*u(t) + beta*u(t - 1 - u(t - b))."""
from .core import HistorySegment, Params, ReducedParams, from_reduced, hopf_point, to_reduced
from .errors import (ArgumentError, ConvergenceError, NumericalError, PhysicalityError,
                     PreconditionError, SddeError)

__version__ = "0.1.0"

__all__ = [
    "Params", "ReducedParams", "HistorySegment", "to_reduced", "from_reduced", "hopf_point",
    "SddeError", "ArgumentError", "PreconditionError", "ConvergenceError", "PhysicalityError",
    "NumericalError",
]
