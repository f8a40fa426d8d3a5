"""Exception types shared across the package."""

from __future__ import annotations


class SpecchanError(Exception):
    """Base class for package errors."""


class DomainError(SpecchanError, ValueError):
    """Input outside the mathematical domain of an operation."""


class RangeError(SpecchanError, ValueError):
    """Requested value outside the attainable range; carries the admissible interval."""

    def __init__(self, message: str, lo: float | None = None, hi: float | None = None):
        super().__init__(message)
        self.admissible = (lo, hi)


class ConvergenceError(SpecchanError, RuntimeError):
    """Iterative search failed; carries the last residual (and trajectory if any)."""

    def __init__(self, message: str, residual: float | None = None, trajectory=None):
        super().__init__(message)
        self.residual = residual
        self.trajectory = trajectory


class AccuracyError(SpecchanError, RuntimeError):
    """Quadrature or expansion did not reach the requested accuracy."""


class ConsistencyError(SpecchanError, RuntimeError):
    """A cross-check that should hold analytically failed beyond tolerance."""


class UnsupportedError(SpecchanError, ValueError):
    """Operation not supported for these model kinds."""
