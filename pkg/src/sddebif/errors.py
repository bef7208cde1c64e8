"""Exception hierarchy shared by all modules."""


class SddeError(Exception):
    """Base class for errors raised by :mod:`sddebif`."""


class ArgumentError(SddeError, ValueError):
    """An argument lies outside the domain of an operation."""


class PreconditionError(SddeError):
    """The state handed to an operation violates its preconditions."""


class ConvergenceError(SddeError):
    """An iterative method failed to converge.

    Parameters
    ----------
    message : str
        Human readable description.
    residual : float, optional
        Last residual norm reached by the iteration.
    time : float, optional
        Time at which a time stepper gave up.
    """

    def __init__(self, message, residual=None, time=None):
        super().__init__(message)
        self.residual = residual
        self.time = time


class PhysicalityError(SddeError):
    """The state-dependent delay became non-positive (orbit beyond locus M)."""

    def __init__(self, message, min_u=None):
        super().__init__(message)
        self.min_u = min_u


class NumericalError(SddeError):
    """A linear-algebra kernel failed."""
