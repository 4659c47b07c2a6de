"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: config/argument problems -> 2,
numerical failures -> 3, IO failures -> 4.
"""


class DeepwasError(Exception):
    """Base class for all package errors."""


class FormatError(DeepwasError):
    """A binary or text file does not conform to its documented format."""


class ValidationError(DeepwasError):
    """Loaded data violates a structural invariant (positions, diagonal, ...)."""


class ArgumentError(DeepwasError):
    """An operation was called with out-of-contract arguments."""


class EmptyInputError(ArgumentError):
    """An operation received an empty collection where data is required."""


class DegenerateBlockError(DeepwasError):
    """A matrix block lost every eigenvalue to clipping."""


class NumericalFailureError(DeepwasError):
    """An iterative computation produced NaNs or failed to converge."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(DeepwasError):
    """A run configuration file or override is malformed."""
