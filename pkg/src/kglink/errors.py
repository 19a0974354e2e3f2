"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so new error types should
subclass one of the four mapped families below.
"""


class KGLinkError(Exception):
    """Base class for all package errors."""


class ConfigError(KGLinkError):
    """Invalid configuration, option value, or usage (exit code 2)."""


class DataError(KGLinkError):
    """Malformed or inconsistent input data (exit code 3)."""


class CheckpointError(DataError):
    """Unreadable, corrupt, or wrong-format checkpoint file."""


class DimensionError(KGLinkError):
    """Array shape violates an operation's contract."""


class NumericError(KGLinkError):
    """Non-finite values where finite ones are required (exit code 4)."""


class NotFittedError(KGLinkError, AttributeError):
    """Estimator method called before fit()."""
