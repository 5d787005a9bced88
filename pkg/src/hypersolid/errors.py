"""Exception types shared across the package."""


class HypersolidError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(HypersolidError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class ArgumentError(HypersolidError, ValueError):
    """An argument is outside its valid domain."""


class FormatError(HypersolidError):
    """A file does not follow the expected binary or text layout."""


class NumericError(HypersolidError, ArithmeticError):
    """A computation produced NaN or Inf."""


class ConfigError(HypersolidError, ValueError):
    """A configuration key or value is invalid."""
