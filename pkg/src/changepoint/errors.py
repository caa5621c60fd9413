"""Semantic exception hierarchy shared by all modules.

Callers that need coarse handling can catch :class:`ChangePointError`;
the CLI maps :class:`ConfigurationError`/:class:`DomainError` to exit
code 2 and :class:`DegenerateDataError` to exit code 3.
"""


class ChangePointError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ChangePointError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ConfigurationError(ChangePointError, ValueError):
    """A tuning parameter or run configuration violates its contract."""


class DegenerateChangeError(ChangePointError, ValueError):
    """Pre- and post-change distributions coincide (no change to estimate)."""


class FactorizationError(ChangePointError):
    """A covariance matrix is not symmetric positive definite."""


class DegenerateDataError(ChangePointError):
    """Data admit no non-singular covariance estimate at any candidate split."""


class UnreachableLevelError(ChangePointError):
    """A requested confidence level cannot be reached within the support."""


class PrecisionError(ChangePointError):
    """Requested accuracy cannot be certified with the given truncation."""
