"""Exception hierarchy shared across the package."""


class CalibrationError(Exception):
    """Base class for all errors raised by :mod:`caring`."""


class DataError(CalibrationError):
    """Malformed or inconsistent input data (non-finite values, bad shapes, parse failures)."""


class InvalidParameterError(CalibrationError, ValueError):
    """A caller-supplied parameter is outside its valid range."""


class NumericFailureError(CalibrationError):
    """An optimizer produced a non-finite loss or parameter."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
