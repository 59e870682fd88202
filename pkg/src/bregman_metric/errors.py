"""Exception types shared across the package."""


class BregmanMetricError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(BregmanMetricError, ValueError):
    """Operand shapes do not agree."""


class DegenerateInputError(BregmanMetricError, ValueError):
    """Input lies on a singular set (zero vector, zero-norm embedding)."""


class NumericError(BregmanMetricError, ArithmeticError):
    """A NaN or Inf appeared where a finite value is required."""


class ConvexityError(NumericError):
    """A Bregman divergence came out clearly negative.

    This only happens when the generating function is not convex, i.e. a
    parameterization bug, so it is never silently clamped.
    """


class ConfigError(BregmanMetricError, ValueError):
    """Invalid hyperparameters or run configuration."""


class ParseError(BregmanMetricError, ValueError):
    """Malformed input file. ``line`` is 1-based, or None for file-level problems."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
