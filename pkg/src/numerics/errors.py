"""
Exception types shared by every PairAge package.

Shape and configuration problems are ValueErrors so callers validating user
input can catch them uniformly; numerical trouble during training is a
RuntimeError.
"""


class PairAgeError(Exception):
    """Base class for all errors raised by PairAge."""


class ShapeError(PairAgeError, ValueError):
    """An array or tensor does not have the extents an operation expects."""

    def __init__(self, what, expected, actual, hint=None):
        """
        Args:
            what (str): Name of the operation or argument being checked
            expected: Description of the expected extents
            actual: The extents actually received
            hint (str): Optional advice appended to the message
        """
        self.what = what
        self.expected = expected
        self.actual = actual
        message = f"{what}: expected {expected}, got {actual}"
        if hint:
            message = f"{message} ({hint})"
        super().__init__(message)


class ConfigError(PairAgeError, ValueError):
    """A configuration value is invalid or inconsistent."""


class NumericalError(PairAgeError, RuntimeError):
    """Training or differentiation produced an unusable numeric state."""
