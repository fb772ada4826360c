"""Error types raised by Active Subset."""

from typing import Optional


class ActiveSubsetError(Exception):
    """Root of all package errors."""


class ConfigurationError(ActiveSubsetError, ValueError):
    """Invalid experiment, split or sampling configuration."""


class InvalidInputError(ActiveSubsetError, ValueError):
    """Malformed numerical input (logits, probabilities, labels, empty sets)."""


class InvalidParameterError(InvalidInputError):
    """A scalar parameter outside its valid range (e.g. temperature <= 0)."""


class DatasetFormatError(InvalidInputError):
    """A dataset file that cannot be parsed or violates dataset invariants.

    Attributes:
        line_number: 1-based line of the offending row (header is line 1), if known.
    """

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ModelNotFittedError(ActiveSubsetError, RuntimeError):
    """Prediction requested from a classifier before fit()."""


class PoolExhaustedError(ActiveSubsetError):
    """No pool subjects remain to transfer."""


class ExperimentError(ActiveSubsetError):
    """A single run inside a suite failed; wraps the original error."""
