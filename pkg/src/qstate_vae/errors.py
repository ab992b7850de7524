"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions are inconsistent."""


class PreconditionError(ValueError):
    """Input violates a documented precondition (non-Hermitian, not PSD, ...)."""


class NumericError(ArithmeticError):
    """A numerical procedure failed or produced non-finite values."""


class RankDeficientError(NumericError):
    """QR input is (numerically) singular; callers should resample."""


class FormatError(ValueError):
    """A serialized file is malformed or has an unsupported version."""


class ConfigError(ValueError):
    """Invalid configuration key or value."""

    def __init__(self, key, message):
        self.key = key
        self.message = message
        super().__init__(f"{key}: {message}")
