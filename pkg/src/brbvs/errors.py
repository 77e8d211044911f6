"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes (config 2, data 3, numerical 4).
"""


class BRBVSError(Exception):
    """Base class for package errors."""


class DomainError(BRBVSError, ValueError):
    """A parameter lies outside its admissible range."""


class UnsupportedFamilyError(DomainError):
    """The requested operation is not available for this copula family."""


class ConfigError(BRBVSError, ValueError):
    """Invalid model, run or scenario configuration."""


class DataError(BRBVSError, ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(BRBVSError, ArithmeticError):
    """A numerical routine failed (non-finite likelihood, quadrature, singular system)."""
