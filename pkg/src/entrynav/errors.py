"""Exception types raised across the package."""


class EntryNavError(Exception):
    """Base class for all package errors."""


class FitError(EntryNavError):
    """Least-squares fit could not be formed (degenerate or too few samples)."""


class ExtrapolationError(EntryNavError, ValueError):
    """Query point outside the tabulated range."""


class SingularityError(EntryNavError, ArithmeticError):
    """Equations of motion evaluated at cos(gamma) ~ 0 or cos(phi) ~ 0."""


class TrainingError(EntryNavError):
    """Offline training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class CovarianceError(EntryNavError, ArithmeticError):
    """Covariance matrix is not positive semi-definite even after jitter."""


class WindowError(EntryNavError):
    """Not enough samples in an adaptive-estimation window."""


class ConfigError(EntryNavError, ValueError):
    """Invalid configuration (unknown key or out-of-range value)."""
