"""Exception types shared across the package."""


class DishmacError(Exception):
    """Base class for model and simulation errors."""


class DomainError(DishmacError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class QuadratureError(DishmacError):
    """Adaptive quadrature failed to reach the requested tolerance.

    Carries the tolerance actually achieved so callers can decide whether
    the partial result is still usable.
    """

    def __init__(self, message, achieved_tol=None):
        super().__init__(message)
        self.achieved_tol = achieved_tol


class UnstableError(DishmacError):
    """The offered load cannot be carried; no valid operating point exists."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class NoConvergenceError(DishmacError):
    """Fixed-point iteration did not reach tolerance within the iteration cap."""

    def __init__(self, message, last_state=None, residual=None):
        super().__init__(message)
        self.last_state = last_state
        self.residual = residual
