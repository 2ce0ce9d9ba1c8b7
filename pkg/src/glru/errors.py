"""Exception types shared across the library.

Each class carries a stable exit code so the command line surface can map
failures without string matching.
"""


class GlruError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ParseError(GlruError):
    """A data file could not be parsed; message names the offending line."""

    exit_code = 3


class ValidationError(GlruError):
    """Inputs violate a precondition (bad indices, dimension mismatch, ...)."""

    exit_code = 4


class NormalizationError(GlruError):
    """A column cannot be normalized under the requested strategy."""

    exit_code = 5


class AssumptionError(GlruError):
    """A bound was requested whose curvature assumption does not hold."""

    exit_code = 6


class SpecializationError(GlruError):
    """An L2-only fast path was called with a different regularizer."""

    exit_code = 7


class ConfigError(GlruError):
    """A workflow configuration is inconsistent before any work starts."""

    exit_code = 8


class ConvergenceError(GlruError):
    """The solver hit its iteration limit; carries the best gap reached."""

    exit_code = 9

    def __init__(self, message, best_gap=None):
        super().__init__(message)
        self.best_gap = best_gap
