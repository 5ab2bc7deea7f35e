"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` and configuration
problems from :class:`ConfigError`; the CLI maps the two families onto
distinct exit codes.
"""

from __future__ import annotations


class BiphotonError(Exception):
    pass


class ConfigError(BiphotonError, ValueError):
    """Invalid configuration, input file content or argument."""


class DomainError(ConfigError):
    """A frequency, position or width falls outside a model's validity window."""


class CoverageError(ConfigError):
    """A spectrum or filter does not cover the grid it is applied to."""


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(BiphotonError, ArithmeticError):
    pass


class DegenerateCrossingError(NumericalError):
    """Supermode branch cannot be followed through an exact, uncoupled degeneracy."""


class StiffnessError(NumericalError):
    pass


class FitError(NumericalError):
    pass


class NoDipError(NumericalError):
    pass


class UndefinedScoreError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class CarUndefinedError(NumericalError):
    """Coincidence-to-accidental ratio requested with zero accidental rate."""


class StageError(BiphotonError):
    """A pipeline stage failed; ``cause`` keeps the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
