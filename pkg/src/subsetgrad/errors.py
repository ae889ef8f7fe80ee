"""Exception types raised across the package."""


class SubsetGradError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SubsetGradError, ValueError):
    pass


class NonFiniteData(SubsetGradError, ValueError):
    pass


class NumericalFailure(SubsetGradError, ArithmeticError):
    """A factorization broke down; usually means an ill-conditioned subset."""


class ConfigError(SubsetGradError, ValueError):
    pass


class Diverged(SubsetGradError, RuntimeError):
    """Logits blew up during SGD, which signals a step size that is too large."""


class EmptyRegion(SubsetGradError, ValueError):
    pass


class InsufficientData(SubsetGradError, ValueError):
    pass


class TooLarge(SubsetGradError, ValueError):
    pass


class ParseError(SubsetGradError, ValueError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class MissingTarget(SubsetGradError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "target column missing"


class ZeroNoise(SubsetGradError, ValueError):
    pass


class ZeroSignal(SubsetGradError, ValueError):
    pass


class EmptyList(SubsetGradError, ValueError):
    pass
