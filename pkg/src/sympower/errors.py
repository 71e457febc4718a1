"""Exception and warning types raised across the package."""


class SymPowerError(Exception):
    """Base class for all package errors."""


class EmptySignal(SymPowerError, ValueError):
    pass


class NonFinite(SymPowerError, ValueError):
    pass


class MissingSamples(SymPowerError, ValueError):
    pass


class MismatchedBins(SymPowerError, ValueError):
    pass


class ShapeMismatch(SymPowerError, ValueError):
    pass


class TooSmall(SymPowerError, ValueError):
    pass


class ZeroTarget(SymPowerError, ValueError):
    pass


class UnsupportedFormat(SymPowerError, ValueError):
    pass


class UnsupportedEncoding(SymPowerError, ValueError):
    pass


class CorruptHeader(SymPowerError, ValueError):
    pass


class DivergenceDetected(SymPowerError, RuntimeError):
    """Training loss became non-finite. ``report`` holds the partial trace."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# Recoverable conditions: the operation still returns a usable value.

class DegenerateStd(UserWarning):
    pass


class DegenerateRange(UserWarning):
    pass


class OutOfBound(UserWarning):
    pass


class ClampWarning(UserWarning):
    pass
