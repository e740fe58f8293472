"""Exception types raised across the package."""


class TiposeError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class DegenerateInput(TiposeError, ValueError):
    pass


class SingularRotation(TiposeError, ValueError):
    pass


class TooShort(TiposeError, ValueError):
    exit_code = 3


class ExcessiveMotion(TiposeError, ValueError):
    pass


class ShapeMismatch(TiposeError, ValueError):
    exit_code = 3


class LengthMismatch(TiposeError, ValueError):
    exit_code = 3


class EmptyBuffer(TiposeError, RuntimeError):
    pass


class NonFinite(TiposeError, FloatingPointError):
    pass


class Divergence(TiposeError, FloatingPointError):
    pass


class OutOfBounds(TiposeError, IndexError):
    pass


class NotCalibrated(TiposeError, RuntimeError):
    pass


class FormatError(TiposeError, ValueError):
    """Malformed input file."""

    exit_code = 3
