"""Exception types shared across the package."""


class NpilabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(NpilabError):
    """Invalid experiment configuration (bad file, bad key, bad value)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DomainError(NpilabError, ValueError):
    """Evaluation requested outside a function's declared domain."""


class GainOverflowError(NpilabError, OverflowError):
    """A gain evaluation exceeded double range; raised instead of returning inf."""


class InvalidSectorError(NpilabError, ValueError):
    """A sector nonlinearity violates its structural requirements."""


class UndefinedThresholdError(NpilabError, ValueError):
    """The storage threshold is undefined because the small-lag condition fails."""


class NonFiniteInputError(NpilabError, ValueError):
    """A dynamics evaluation received a non-finite value; integration must abort."""
