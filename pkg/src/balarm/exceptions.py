"""Exception hierarchy shared by the library and the command-line front end."""


class BalarmError(Exception):
    """Base class for all errors raised by :mod:`balarm`."""


class ValidationError(BalarmError, ValueError):
    """Invalid input data, dimensions or settings."""


class NumericalError(BalarmError, ArithmeticError):
    """A numerical procedure could not produce a usable result."""


class SeparationError(NumericalError):
    """The weighted normal system of an IRLS step is singular.

    This usually signals (quasi-)complete separation; callers are expected
    to retry with a larger ridge penalty.
    """


class ConvergenceError(NumericalError):
    """An iterative procedure exhausted its iteration budget."""


class FitError(NumericalError):
    """Every EM restart failed.

    The ``diagnostics`` attribute holds one message per failed restart.
    """

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class InsufficientDataError(BalarmError, ValueError):
    """Not enough data (e.g. no interior runs) to compute a statistic."""
