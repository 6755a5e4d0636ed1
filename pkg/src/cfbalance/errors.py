"""Exception types raised across the package."""

from __future__ import annotations


class CfbalanceError(Exception):
    """Base class for all package errors."""


class DataError(CfbalanceError, ValueError):
    """Malformed input data, with optional row/column location."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class MissingColumn(DataError):
    pass


class NonBinaryTreatment(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class InvalidSplit(CfbalanceError, ValueError):
    pass


class EmptyInput(CfbalanceError, ValueError):
    pass


class DimensionMismatch(CfbalanceError, ValueError):
    pass


class AllZeroWeights(CfbalanceError, ValueError):
    pass


class InsufficientData(CfbalanceError, ValueError):
    pass


class DegenerateGroup(CfbalanceError, ValueError):
    pass


class InvalidDims(CfbalanceError, ValueError):
    pass


class BadCovariateShape(CfbalanceError, ValueError):
    pass


class MissingAnchors(CfbalanceError, ValueError):
    pass


class NotConvergedWarning(UserWarning):
    """Emitted when an iterative solver stops at its iteration cap.

    Solvers never raise on non-convergence; the best iterate is returned with
    ``converged=False`` and this warning is issued.
    """
