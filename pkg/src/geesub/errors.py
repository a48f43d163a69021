"""Exception hierarchy shared across the package."""

from __future__ import annotations

import numpy as np


class GeesubError(Exception):
    """Base class for all package errors."""


class DataError(GeesubError):
    """Structural or parse problem in panel input data."""


class DomainError(GeesubError, ValueError):
    """Argument or parameter outside its valid domain."""


class DegenerateError(GeesubError):
    """Inputs carry no information for the requested estimate."""


class RankError(GeesubError):
    """A matrix that must be invertible is numerically singular."""


class InfeasibleError(DomainError):
    """No probability vector can satisfy the requested budget."""


class ConvergenceError(GeesubError):
    """An iterative fit failed to converge within the iteration cap."""

    def __init__(self, message: str, last_beta: np.ndarray | None = None,
                 iterations: int = 0):
        super().__init__(message)
        self.last_beta = last_beta
        self.iterations = iterations


class BenchmarkError(GeesubError):
    """Benchmark aborted because too many replications failed."""
