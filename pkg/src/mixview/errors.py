"""Exception hierarchy shared by every mixview module."""


class MixviewError(Exception):
    """Base class for all library errors."""


class DimensionError(MixviewError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(MixviewError, ValueError):
    """An argument is outside its valid range."""


class ContractError(MixviewError, RuntimeError):
    """A precondition of an operation does not hold."""


class DegenerateInputError(MixviewError, ValueError):
    """Input is degenerate, e.g. a zero vector where a direction is required."""


class NumericalError(MixviewError, ArithmeticError):
    """Non-finite values or a numerically invalid intermediate result."""


class FormatError(MixviewError, ValueError):
    """A file or checkpoint does not match the expected layout."""


class ConfigError(MixviewError, ValueError):
    """Invalid experiment configuration. ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
