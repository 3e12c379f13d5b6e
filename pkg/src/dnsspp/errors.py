"""Exception hierarchy used across the package."""


class DNSSPPError(Exception):
    """Base class for all package errors."""


class EventParseError(DNSSPPError, ValueError):
    """A row of an event file could not be parsed."""

    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class WindowError(DNSSPPError, ValueError):
    """Invalid window, or a point outside its window."""


class DimensionError(DNSSPPError, ValueError):
    """Array shapes do not agree."""


class UnsupportedConfigurationError(DNSSPPError):
    pass


class SingularEventError(DNSSPPError, ArithmeticError):
    """Some event sits exactly on a zero of f + alpha (log of zero)."""


class NonConvergenceError(DNSSPPError, RuntimeError):
    def __init__(self, message, grad_norm=None):
        self.grad_norm = grad_norm
        super().__init__(message)


class NumericalDegeneracyError(DNSSPPError, ArithmeticError):
    pass


class FitError(DNSSPPError, RuntimeError):
    """Training failed at some epoch; carries the trace so far."""

    def __init__(self, message, epoch=None, trace=None):
        self.epoch = epoch
        self.trace = list(trace) if trace is not None else []
        super().__init__(message)


class DomainError(DNSSPPError, ValueError):
    pass


class IntensityBoundError(DNSSPPError, ValueError):
    """Thinning met an intensity above its dominating rate."""
