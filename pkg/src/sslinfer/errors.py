"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SSLInferError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SSLInferError, ValueError):
    """Invalid user-supplied configuration (bad grid, fold count, flags)."""


class SchemaError(SSLInferError, ValueError):
    """Input shapes or file layouts do not agree."""


class ParseError(SSLInferError, ValueError):
    """A CSV cell could not be read as a number."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class InsufficientDataError(SSLInferError, ValueError):
    """Too few observations for the requested operation."""


class DomainError(SSLInferError, ValueError):
    """Non-finite or otherwise out-of-domain numeric input."""


class NumericalError(SSLInferError, ArithmeticError):
    """A numerical stage failed; ``stage`` names where."""

    stage = "numerical"


class NoConvergenceError(NumericalError):
    """Iterative solver stopped without meeting its tolerance."""

    stage = "solver"

    def __init__(self, message: str, best_iterate=None, trail=None):
        super().__init__(message)
        self.best_iterate = best_iterate
        self.trail = trail


class DegenerateColumnError(NumericalError):
    """Node-wise residual variance collapsed for column ``k``."""

    stage = "precision"

    def __init__(self, k: int, tau_sq: float):
        super().__init__(f"node-wise residual variance for column {k} is {tau_sq:.3e} (<= 1e-12)")
        self.k = k
        self.tau_sq = tau_sq


class DegenerateVarianceError(NumericalError):
    """Plug-in variance is negative, zero or non-finite."""

    stage = "variance"


class SingularHessianError(NumericalError):
    stage = "hessian"
