"""Exception types shared across the package."""


class KoopdynError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(KoopdynError):
    """Vector or matrix shapes are inconsistent."""


class DomainError(KoopdynError):
    """A scalar parameter is outside its valid range."""


class InsufficientDataError(KoopdynError):
    """Not enough snapshots to form shifted pairs."""


class DegenerateDataError(KoopdynError):
    """Snapshot matrix is identically zero or otherwise unusable."""


class ConvergenceError(KoopdynError):
    """An iterative solver failed to converge.

    Carries the last residual norm in ``residual`` when available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IllConditionedError(KoopdynError):
    """Eigenbasis or least-squares system is numerically defective."""


class StepSizeError(KoopdynError):
    """A force lift was built with a different step size than the model."""


class IllConditionedWarning(UserWarning):
    """Non-fatal rank deficiency; a minimum-norm solution was returned."""


class AliasingWarning(UserWarning):
    """Time-step rescaling touched a mode near the negative real axis."""
