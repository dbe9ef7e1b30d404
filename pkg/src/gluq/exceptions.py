"""Exception types raised across the package."""

from .autodiff.optim import NumericError
from .autodiff.special import DomainError
from .autodiff.tensor import ShapeError, TapeStateError

__all__ = [
    "GluqError",
    "SchemaError",
    "DataFormatError",
    "SizeError",
    "DegenerateChannelError",
    "ConfigError",
    "TrainingError",
    "GridSpecError",
    "UndefinedMetricError",
    "MissingCellError",
    "StateError",
    "DomainError",
    "NumericError",
    "ShapeError",
    "TapeStateError",
]


class GluqError(Exception):
    """Base class for package-specific errors."""


class SchemaError(GluqError, KeyError):
    """A required input column is missing."""

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"missing column {column!r}")

    def __str__(self):
        return self.args[0]


class DataFormatError(GluqError, ValueError):
    """Input rows violate the sampling or value contract."""

    def __init__(self, message, row=None):
        self.row = row
        super().__init__(message)


class SizeError(GluqError, ValueError):
    """Input too small (or empty) for the requested operation."""


class DegenerateChannelError(GluqError, ValueError):
    """A channel has zero variance and cannot be standardized."""


class ConfigError(GluqError, ValueError):
    """Invalid configuration value or combination."""


class TrainingError(GluqError, RuntimeError):
    """Training diverged."""

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message)


class GridSpecError(GluqError, ValueError):
    """Error-grid specification is malformed or does not partition its domain."""


class UndefinedMetricError(GluqError, ValueError):
    """Metric is undefined for the given inputs (no positives, constant vector...)."""


class MissingCellError(GluqError, KeyError):
    """A patients-by-conditions score matrix has a missing cell."""

    def __str__(self):
        return self.args[0]


class StateError(GluqError, RuntimeError):
    """Operation invoked on an object in the wrong state."""
