"""Sparse additive surrogate for the conditional mean.

Each coordinate is expanded in a cubic B-spline basis (knots at training
quantiles), the basis block is centered and orthonormalised, and a group
lasso selected by BIC picks the active coordinates. Outside the training
range each coordinate function continues as the cubic of its end piece.

Any object with an ``evaluate(x) -> vector`` method can stand in for a fit;
trainers follow ``SurrogateTrainer``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np
from scipy.interpolate import BSpline

from .errors import InsufficientDataError, SchemaError
from .solvers import N_LAMBDA, tune_by_bic

logger = logging.getLogger(__name__)

DEGREE = 3


class Surrogate(Protocol):
    def evaluate(self, x_new) -> np.ndarray: ...


class SurrogateTrainer(Protocol):
    def __call__(self, x, y, seed: int) -> Surrogate: ...


@dataclass(frozen=True)
class CoordinateBasis:
    """Spline expansion of one coordinate: centered, whitened basis of width ``size``."""

    knots: np.ndarray
    lo: float
    hi: float
    means: np.ndarray
    transform: np.ndarray  # raw basis (without first function) -> orthonormal block

    @property
    def size(self) -> int:
        return self.transform.shape[1]

    def raw(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        B = BSpline.design_matrix(x, self.knots, DEGREE, extrapolate=True).toarray()
        return B[:, 1:]

    def expand(self, x) -> np.ndarray:
        return (self.raw(x) - self.means) @ self.transform


def _coordinate_basis(x, df: int) -> CoordinateBasis | None:
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        return None
    n_inner = max(df - DEGREE, 0)
    qs = np.quantile(x, np.linspace(0, 1, n_inner + 2)[1:-1]) if n_inner else np.empty(0)
    inner = np.unique(qs[(qs > lo) & (qs < hi)])
    knots = np.concatenate([[lo] * (DEGREE + 1), inner, [hi] * (DEGREE + 1)])
    xc = np.clip(x, lo, hi)
    B = BSpline.design_matrix(xc, knots, DEGREE).toarray()[:, 1:]
    means = B.mean(axis=0)
    Bc = B - means
    evals, evecs = np.linalg.eigh(Bc.T @ Bc / len(x))
    keep = evals > 1e-10 * max(evals.max(), 1e-300)
    if not keep.any():
        return None
    transform = evecs[:, keep] / np.sqrt(evals[keep])
    return CoordinateBasis(knots, lo, hi, means, transform)


@dataclass(frozen=True)
class AdditiveModelFit:
    bases: tuple  # CoordinateBasis or None per coordinate
    block_coefs: tuple  # per coordinate, empty for dropped coordinates
    intercept: float
    lam: float
    basis_df: int = 5
    fitted_values: np.ndarray = field(default=None, repr=False)
    warnings: tuple = ()
    bic_grid: np.ndarray | None = field(default=None, repr=False)
    bic_values: np.ndarray | None = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return len(self.bases)

    @property
    def knots(self) -> list:
        return [None if b is None else b.knots for b in self.bases]

    @property
    def active_set(self) -> np.ndarray:
        return np.array([j for j, c in enumerate(self.block_coefs) if c.size and np.linalg.norm(c) > 0], dtype=int)

    def evaluate(self, x_new) -> np.ndarray:
        x = np.asarray(x_new, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.p:
            raise SchemaError(f"expected a matrix with {self.p} columns, got shape {x.shape}")
        out = np.full(x.shape[0], self.intercept)
        for j, (b, c) in enumerate(zip(self.bases, self.block_coefs)):
            if b is None or not np.any(c):
                continue
            out += b.expand(x[:, j]) @ c
        return out

    __call__ = evaluate

    def scaled(self, factor: float) -> "AdditiveModelFit":
        """Same basis with every block multiplied by ``factor``."""
        return replace(self, block_coefs=tuple(factor * c for c in self.block_coefs), fitted_values=None)


def fit_sparse_additive(x, y, df: int = 5, lambda_grid=None, seed: int = 0, *, n_lambda: int = N_LAMBDA) -> AdditiveModelFit:
    """Group-lasso additive fit with BIC-selected penalty.

    ``seed`` is accepted for interface symmetry with stochastic trainers; the
    spline fit itself is deterministic.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, p = x.shape
    if y.size != n:
        raise SchemaError("x and y row counts differ")
    if n <= df + 1:
        raise InsufficientDataError(f"need n > df + 1 = {df + 1} rows, got {n}")
    bases = []
    warnings = []
    blocks = []
    for j in range(p):
        b = _coordinate_basis(x[:, j], df)
        if b is None:
            warnings.append(f"coordinate {j} is constant in the training rows; dropped")
            logger.warning("coordinate %d constant; dropped from spline expansion", j)
        else:
            blocks.append(b.expand(x[:, j]))
        bases.append(b)
    intercept = float(y.mean())
    if not blocks or not np.any(y - intercept):
        coefs = tuple(np.zeros(0 if b is None else b.size) for b in bases)
        return AdditiveModelFit(tuple(bases), coefs, intercept, np.inf, df, np.full(n, intercept), tuple(warnings))
    sel = tune_by_bic(blocks, y, lambda_grid, n_lambda=n_lambda)
    flat = sel.coefs[sel.chosen_index]
    coefs = []
    pos = 0
    for b in bases:
        if b is None:
            coefs.append(np.zeros(0))
        else:
            coefs.append(flat[pos : pos + b.size].copy())
            pos += b.size
    fit = AdditiveModelFit(tuple(bases), tuple(coefs), intercept, sel.chosen_lambda, df, None, tuple(warnings), sel.lambda_grid, sel.bic)
    return replace(fit, fitted_values=fit.evaluate(x))


def evaluate(fit, x_new) -> np.ndarray:
    return fit.evaluate(x_new)


@dataclass(frozen=True)
class SplineAdditiveTrainer:
    df: int = 5
    n_lambda: int = N_LAMBDA

    def __call__(self, x, y, seed: int = 0) -> AdditiveModelFit:
        return fit_sparse_additive(x, y, self.df, None, seed, n_lambda=self.n_lambda)


@dataclass(frozen=True)
class FunctionSurrogate:
    """Wrap a plain function of the covariate matrix (oracle or fixed m)."""

    fn: Callable[[np.ndarray], np.ndarray]

    def evaluate(self, x_new) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x_new, dtype=float)), dtype=float).reshape(-1)

    __call__ = evaluate


def constant_surrogate(c: float = 0.0) -> FunctionSurrogate:
    return FunctionSurrogate(lambda x: np.full(x.shape[0], float(c)))


@dataclass(frozen=True)
class FixedTrainer:
    """Trainer that ignores its data and returns a preset surrogate."""

    surrogate: Surrogate

    def __call__(self, x, y, seed: int = 0):
        return self.surrogate


def crossfit_surrogates(ds, split, trainer: SurrogateTrainer, seed: int = 0) -> tuple:
    """Train ``(f^{-1}, f^{-2})``; the ``-j`` fit sees only labeled rows outside fold j."""
    out = []
    for j in (1, 2):
        rows = split.complement(j)
        out.append(trainer(ds.labeled_x[rows], ds.labeled_y[rows], seed + j))
    return tuple(out)
