"""Exception types shared across the package.

Two families: validation errors (bad input data or bad configuration,
mapped to exit code 2 by the CLI) and computation errors (numerical
failures during fitting or estimation, mapped to exit code 1).
"""

from __future__ import annotations

__all__ = [
    "SurvsensError",
    "ValidationError",
    "ComputationError",
    "MissingColumn",
    "BadValue",
    "EmptyArm",
    "NoEventsInArm",
    "NonConvergence",
    "SingularInformation",
    "DegenerateSurvival",
    "ZeroDenominator",
    "QuantileUndefined",
    "DensityZero",
]


class SurvsensError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(SurvsensError):
    """Invalid input data or configuration."""


class ComputationError(SurvsensError):
    """Numerical failure during fitting or estimation."""


class MissingColumn(ValidationError):
    """A required CSV column is absent."""


class BadValue(ValidationError):
    """A CSV cell failed validation.

    Parameters
    ----------
    row : int
        1-based data row number (header excluded).
    column : str
        Name of the offending column.
    detail : str
        Human-readable description of the problem.
    """

    def __init__(self, row: int, column: str, detail: str) -> None:
        self.row = row
        self.column = column
        self.detail = detail
        super().__init__(f"row {row}, column {column!r}: {detail}")


class EmptyArm(ValidationError):
    """An arm has fewer than two subjects."""


class NoEventsInArm(ValidationError):
    """An arm has no observed events."""


class NonConvergence(ComputationError):
    """Cox partial-likelihood maximization failed to converge."""


class SingularInformation(ComputationError):
    """Observed information matrix is singular or not positive definite."""


class DegenerateSurvival(ComputationError):
    """Fitted survival is exactly zero at a censoring time."""


class ZeroDenominator(ComputationError):
    """Control-arm restricted mean time lost is zero."""


class QuantileUndefined(ComputationError):
    """Survival curve never drops to the requested level."""


class DensityZero(ComputationError):
    """Estimated density at the quantile is zero."""
