"""Exception types shared across the package.

Each class carries the CLI exit code it maps to so the command layer can
translate failures without a lookup table.
"""


class FockTrajError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(FockTrajError, ValueError):
    """Bad user input: wrong shapes, non-Hermitian operators, bad parameters."""

    exit_code = 2


class NumericalError(FockTrajError, ArithmeticError):
    """Step size too large, probabilities out of range, invariant drift."""

    exit_code = 3


class ResolutionError(NumericalError):
    """Time-bin discretization too coarse for the requested accuracy."""


class InfeasibleRecordError(FockTrajError):
    """A replayed record contains an outcome of (numerically) zero probability."""

    exit_code = 4


class RecordError(ValidationError):
    """Record does not match the scenario (scheme, length, grid)."""
