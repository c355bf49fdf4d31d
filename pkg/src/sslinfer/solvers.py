"""Sparse regression kernels and tuning.

Lasso and group lasso are solved by coordinate descent (compiled loops in
``_kernels``); the Dantzig selector is solved exactly as a linear program.
Cross-validation and BIC tuning live here too.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from . import _kernels
from .errors import ConfigurationError, DomainError, NoConvergenceError, SchemaError

logger = logging.getLogger(__name__)

LASSO_TOL = 1e-8
MAX_SWEEPS = 100_000
N_LAMBDA = 100
LAMBDA_MIN_RATIO = 1e-3
DANTZIG_N_LAMBDA = 30
# grid points past the running CV minimum before a path is cut short
CV_PATIENCE = 10


@dataclass(frozen=True)
class SparseLinearFit:
    coefficients: np.ndarray
    lam: float
    iterations: int = 0
    converged: bool = True
    dual_gap_or_violation: float = 0.0
    kind: str = "lasso"

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients)


@dataclass(frozen=True)
class TuningResult:
    lambda_grid: np.ndarray
    cv_errors: np.ndarray  # grid x folds
    chosen_lambda: float
    rule: str = "minimum"
    chosen_index: int = 0

    @property
    def mean_errors(self) -> np.ndarray:
        return self.cv_errors.mean(axis=1)


@dataclass(frozen=True)
class BICResult:
    lambda_grid: np.ndarray
    bic: np.ndarray
    rss: np.ndarray
    df: np.ndarray
    chosen_lambda: float
    chosen_index: int
    coefs: list = field(repr=False, default_factory=list)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite input to solver")


def lambda_grid(lam_max: float, n_lambda: int = N_LAMBDA, min_ratio: float = LAMBDA_MIN_RATIO) -> np.ndarray:
    """Descending log-spaced grid from ``lam_max`` to ``min_ratio * lam_max``."""
    if lam_max <= 0 or not math.isfinite(lam_max):
        return np.zeros(1)
    if n_lambda == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, lam_max * min_ratio, n_lambda)


# --------------------------------------------------------------------------- lasso


def lasso_gram(gram, target, lam, start=None, *, tol=LASSO_TOL, max_iter=MAX_SWEEPS, exclude=-1, trace=0):
    """Lasso in Gram form: minimise 0.5 b'Gb - c'b + lam |b|_1.

    Returns ``(fit, objective_trace)``; the trace holds the objective after
    each of the first ``trace`` sweeps.
    """
    G = np.ascontiguousarray(gram, dtype=float)
    c = np.ascontiguousarray(target, dtype=float)
    _check_finite(G, c)
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    beta = np.zeros(c.size) if start is None else np.array(start, dtype=float)
    obj = np.full(trace, np.nan)
    sweeps, kkt = _kernels.lasso_gram_cd(G, c, float(lam), beta, tol, max_iter, exclude, obj)
    converged = kkt <= max(tol, 1e-6)
    if not converged:
        logger.warning("lasso stopped after %d sweeps with KKT violation %.2e", sweeps, kkt)
    return SparseLinearFit(beta, float(lam), int(sweeps), bool(converged), float(kkt), "lasso"), obj[: min(sweeps, trace)]


def fit_lasso(x, y, lam: float, *, tol: float = LASSO_TOL, max_iter: int = MAX_SWEEPS, start=None) -> SparseLinearFit:
    """Minimise (1/2n)|y - x b|^2 + lam |b|_1."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    _check_finite(x, y)
    n = x.shape[0]
    if n < 1:
        raise ConfigurationError("fit_lasso needs at least one row")
    fit, _ = lasso_gram(x.T @ x / n, x.T @ y / n, lam, start, tol=tol, max_iter=max_iter)
    return fit


def lasso_path(gram, target, lambdas, *, tol=LASSO_TOL, max_iter=MAX_SWEEPS, exclude=-1):
    """Warm-started Gram-form lasso path. Returns (coefs L x p, sweeps, kkt)."""
    G = np.ascontiguousarray(gram, dtype=float)
    c = np.ascontiguousarray(target, dtype=float)
    lams = np.ascontiguousarray(lambdas, dtype=float)
    return _kernels.lasso_gram_path(G, c, lams, tol, max_iter, exclude)


def kkt_residual(x, y, coefficients) -> np.ndarray:
    """(1/n) X'(y - X b), the quantity bounded by lambda in the optimality conditions."""
    x = np.asarray(x, dtype=float)
    return x.T @ (np.asarray(y, dtype=float) - x @ coefficients) / x.shape[0]


# ------------------------------------------------------------------- group lasso


def _block_layout(blocks: Sequence[np.ndarray]):
    sizes = np.array([b.shape[1] for b in blocks], dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    return starts, sizes


def _block_lipschitz(blocks, n):
    out = np.empty(len(blocks))
    for g, b in enumerate(blocks):
        if b.shape[1] == 0:
            out[g] = 0.0
        else:
            out[g] = float(np.linalg.eigvalsh(b.T @ b / n)[-1])
    return out


def group_lambda_max(blocks, y) -> float:
    n = len(y)
    vals = [np.linalg.norm(b.T @ y / n) / math.sqrt(b.shape[1]) for b in blocks if b.shape[1] > 0]
    return max(vals) if vals else 0.0


def fit_group_lasso(x_blocks, y, lam: float, *, tol: float = LASSO_TOL, max_iter: int = MAX_SWEEPS, start=None):
    """Minimise (1/2n)|y - sum_j X_j b_j|^2 + lam sum_j sqrt(d_j) |b_j|_2.

    Returns ``(block_coefs, fit)`` where ``fit`` is the flat SparseLinearFit.
    """
    blocks = [np.asarray(b, dtype=float).reshape(len(y), -1) for b in x_blocks]
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.size
    if any(b.shape[0] != n for b in blocks):
        raise SchemaError("all blocks must share the row count of y")
    X = np.asfortranarray(np.hstack(blocks)) if blocks else np.zeros((n, 0), order="F")
    _check_finite(X, y)
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    starts, sizes = _block_layout(blocks)
    lip = _block_lipschitz(blocks, n)
    weights = np.sqrt(sizes.astype(float))
    beta = np.zeros(X.shape[1]) if start is None else np.array(start, dtype=float)
    sweeps, kkt = _kernels.group_lasso_bcd(X, y, starts, sizes, lip, float(lam), weights, beta, tol, max_iter)
    converged = kkt <= max(tol, 1e-6)
    fit = SparseLinearFit(beta, float(lam), int(sweeps), bool(converged), float(kkt), "group")
    return [beta[s : s + d].copy() for s, d in zip(starts, sizes)], fit


def group_lasso_path(x_blocks, y, lambdas, *, tol=LASSO_TOL, max_iter=MAX_SWEEPS, df_stop: int = 0):
    """Warm-started path; returns (coefs, sweeps, kkt). Rows after an early
    stop (see ``df_stop``) are NaN."""
    blocks = [np.asarray(b, dtype=float) for b in x_blocks]
    y = np.ascontiguousarray(y, dtype=float)
    X = np.asfortranarray(np.hstack(blocks))
    starts, sizes = _block_layout(blocks)
    lip = _block_lipschitz(blocks, len(y))
    weights = np.sqrt(sizes.astype(float))
    lams = np.ascontiguousarray(lambdas, dtype=float)
    coefs, sweeps, kkts, _ = _kernels.group_lasso_path(X, y, starts, sizes, lip, lams, weights, tol, max_iter, int(df_stop))
    return coefs, sweeps, kkts


# ----------------------------------------------------------------------- Dantzig


def fit_dantzig(a, b, lam: float) -> SparseLinearFit:
    """Minimise |t|_1 subject to |a t - b|_inf <= lam, as an LP on t = u - w.

    ``dual_gap_or_violation`` records max(|a t - b|_inf - lam, 0).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    _check_finite(a, b)
    p = b.size
    if a.shape != (p, p):
        raise SchemaError(f"constraint matrix has shape {a.shape}, expected ({p}, {p})")
    if lam < 0:
        raise DomainError("lambda must be nonnegative; the constraint set is empty otherwise")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > 1e-8 * scale:
        raise DomainError("constraint matrix is not symmetric")
    if np.linalg.eigvalsh((a + a.T) / 2)[0] < -1e-8 * scale:
        raise DomainError("constraint matrix is not positive semidefinite")
    if lam >= np.abs(b).max():
        return SparseLinearFit(np.zeros(p), float(lam), 0, True, 0.0, "dantzig")
    A_ub = np.block([[a, -a], [-a, a]])
    b_ub = np.concatenate([lam + b, lam - b])
    res = linprog(np.ones(2 * p), A_ub=A_ub, b_ub=b_ub, bounds=(0, None), method="highs-ds")
    if res.status != 0 or res.x is None:
        best = None if res.x is None else res.x[:p] - res.x[p:]
        raise NoConvergenceError(f"Dantzig LP failed: {res.message}", best_iterate=best)
    theta = res.x[:p] - res.x[p:]
    theta[np.abs(theta) < 1e-13] = 0.0
    viol = max(float(np.abs(a @ theta - b).max()) - lam, 0.0)
    return SparseLinearFit(theta, float(lam), int(getattr(res, "nit", 0)), viol <= 1e-6, viol, "dantzig")


def dantzig_lambda_max(b) -> float:
    return float(np.abs(np.asarray(b)).max())


# -------------------------------------------------------------------------- tuning


def fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    """Balanced fold labels 0..folds-1 in a seeded random order."""
    if folds < 2:
        raise ConfigurationError("cross-validation needs at least 2 folds")
    if n < folds:
        raise ConfigurationError(f"{folds} folds leave a fold with < 1 observation (n={n})")
    perm = np.random.default_rng(seed).permutation(n)
    ids = np.empty(n, dtype=np.int64)
    ids[perm] = np.arange(n) % folds
    return ids


def select_lambda(grid, cv_errors, rule: str = "minimum") -> int:
    """Index of the chosen grid value; ties resolve to the first index."""
    mean = cv_errors.mean(axis=1)
    imin = int(np.argmin(mean))
    if rule == "minimum":
        return imin
    if rule in ("one-standard-error", "1se"):
        k = cv_errors.shape[1]
        se = cv_errors[imin].std(ddof=1) / math.sqrt(k) if k > 1 else 0.0
        ok = np.flatnonzero(mean <= mean[imin] + se)
        # grid is descending, so the first admissible index is the largest lambda
        return int(ok[0])
    raise ConfigurationError(f"unknown selection rule {rule!r}")


def gram_fold_stats(x, y, ids, folds):
    """Stacked per-fold Gram statistics for ``cv_lasso_from_stats``.

    ``y`` may be a vector or an (m, K) matrix of several responses sharing
    the design; targets then come back with a trailing K axis.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = x.shape[1]
    Y = y.reshape(y.shape[0], -1)
    K = Y.shape[1]
    Gt = np.empty((folds, p, p))
    Gv = np.empty((folds, p, p))
    ct = np.empty((folds, p, K))
    cv = np.empty((folds, p, K))
    yyv = np.empty((folds, K))
    for f in range(folds):
        tr, va = ids != f, ids == f
        xt, xv, yt, yv = x[tr], x[va], Y[tr], Y[va]
        nt, nv = xt.shape[0], xv.shape[0]
        Gt[f] = xt.T @ xt / nt
        Gv[f] = xv.T @ xv / nv
        ct[f] = xt.T @ yt / nt
        cv[f] = xv.T @ yv / nv
        yyv[f] = np.sum(yv * yv, axis=0) / nv
    return Gt, ct, Gv, cv, yyv


def cv_lasso_from_stats(Gt, ct, Gv, cv, yyv, grid, rule="minimum", *, exclude=-1, patience=CV_PATIENCE) -> TuningResult:
    """CV over ``grid`` for one response given fold statistics (targets of shape folds x p).

    Grid points past an early stop carry +inf error and are never selected.
    """
    grid = np.ascontiguousarray(grid, dtype=float)
    errs, _ = _kernels.lasso_cv_path(
        np.ascontiguousarray(Gt), np.ascontiguousarray(ct), np.ascontiguousarray(Gv),
        np.ascontiguousarray(cv), np.ascontiguousarray(yyv), grid, LASSO_TOL, MAX_SWEEPS, exclude, patience,
    )
    idx = select_lambda(grid, errs, rule)
    return TuningResult(grid, errs, float(grid[idx]), rule, idx)


def tune_by_cv(
    fit_kind: str,
    x,
    y,
    folds: int = 5,
    grid=None,
    rule: str = "minimum",
    seed: int = 0,
    n_lambda: int | None = None,
) -> TuningResult:
    """K-fold cross-validation over a descending lambda grid.

    ``fit_kind`` is ``lasso``, ``dantzig`` or ``group`` (``x`` is then a list
    of blocks). Errors are held-out mean squared prediction errors.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.size
    ids = fold_ids(n, folds, seed)
    if fit_kind == "group":
        blocks = [np.asarray(b, dtype=float) for b in x]
        X = np.hstack(blocks)
    else:
        X = np.asarray(x, dtype=float)
    _check_finite(X, y)
    if grid is None:
        if fit_kind == "lasso":
            grid = lambda_grid(np.abs(X.T @ y / n).max(), n_lambda or N_LAMBDA)
        elif fit_kind == "dantzig":
            grid = lambda_grid(np.abs(X.T @ y / n).max(), n_lambda or DANTZIG_N_LAMBDA)
        elif fit_kind == "group":
            grid = lambda_grid(group_lambda_max(blocks, y), n_lambda or N_LAMBDA)
        else:
            raise ConfigurationError(f"unknown fit kind {fit_kind!r}")
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ConfigurationError("lambda grid is empty")
    if np.any(grid < 0):
        raise ConfigurationError("lambda grid must be nonnegative")
    if fit_kind == "lasso":
        Gt, ct, Gv, cv, yyv = gram_fold_stats(X, y, ids, folds)
        return cv_lasso_from_stats(Gt, ct[:, :, 0], Gv, cv[:, :, 0], yyv[:, 0], grid, rule)
    errs = np.empty((grid.size, folds))
    for f in range(folds):
        tr, va = ids != f, ids == f
        Xt, yt, Xv, yv = X[tr], y[tr], X[va], y[va]
        nt = Xt.shape[0]
        if fit_kind == "dantzig":
            a, b = Xt.T @ Xt / nt, Xt.T @ yt / nt
            coefs = np.array([fit_dantzig(a, b, lam).coefficients for lam in grid])
        elif fit_kind == "group":
            tblocks = [bk[tr] for bk in blocks]
            coefs, _, _ = group_lasso_path(tblocks, yt, grid)
        else:
            raise ConfigurationError(f"unknown fit kind {fit_kind!r}")
        resid = yv[None, :] - coefs @ Xv.T
        errs[:, f] = np.mean(resid**2, axis=1)
    idx = select_lambda(grid, errs, rule)
    return TuningResult(grid, errs, float(grid[idx]), rule, idx)


def tune_dantzig_custom(
    build: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    x,
    y,
    folds: int = 5,
    grid=None,
    rule: str = "minimum",
    seed: int = 0,
    lam_max: float | None = None,
    n_lambda: int = DANTZIG_N_LAMBDA,
) -> TuningResult:
    """CV for Dantzig problems whose (a, b) come from a caller-supplied builder.

    ``build(train_mask)`` returns the constraint pair for the labeled rows
    in ``train_mask``; held-out error is the mean squared error on ``x, y``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    ids = fold_ids(y.size, folds, seed)
    if grid is None:
        if lam_max is None:
            _, b_full = build(np.ones(y.size, dtype=bool))
            lam_max = dantzig_lambda_max(b_full)
        grid = lambda_grid(lam_max, n_lambda)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ConfigurationError("lambda grid is empty")
    errs = np.empty((grid.size, folds))
    for f in range(folds):
        tr = ids != f
        a, b = build(tr)
        coefs = np.array([fit_dantzig(a, b, lam).coefficients for lam in grid])
        resid = y[~tr][None, :] - coefs @ x[~tr].T
        errs[:, f] = np.mean(resid**2, axis=1)
    idx = select_lambda(grid, errs, rule)
    return TuningResult(grid, errs, float(grid[idx]), rule, idx)


def bic_value(n: int, rss: float, df: int) -> float:
    return n * math.log(rss / n) + math.log(n) * df


def tune_by_bic(x_blocks, y, grid=None, *, n_lambda: int = N_LAMBDA, max_df: int | None = None) -> BICResult:
    """Pick the grid lambda minimising n log(RSS/n) + log(n) df for a group lasso with intercept.

    Blocks and response are centered internally (the intercept is unpenalised).
    ``df`` counts nonzero coefficients. Fits with df >= max_df (default n - 1)
    are excluded because the criterion is unbounded below as RSS -> 0; the
    path stops at the first such fit and later grid points stay unfitted
    (NaN coefficients, NaN BIC).
    ``np.inf`` entries in the grid denote the null model.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.size
    blocks = [np.asarray(b, dtype=float) for b in x_blocks]
    blocks = [b - b.mean(axis=0) for b in blocks]
    yc = y - y.mean()
    if grid is None:
        grid = lambda_grid(group_lambda_max(blocks, yc), n_lambda)
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ConfigurationError("lambda grid is empty")
    max_df = n - 1 if max_df is None else max_df
    finite = np.isfinite(grid)
    P = sum(b.shape[1] for b in blocks)
    coefs = np.zeros((grid.size, P))
    if finite.any():
        coefs[finite], _, _ = group_lasso_path(blocks, yc, grid[finite], df_stop=max_df)
    fitted = ~np.isnan(coefs).any(axis=1)
    X = np.hstack(blocks)
    rss = np.full(grid.size, np.nan)
    rss[fitted] = np.sum((yc[None, :] - coefs[fitted] @ X.T) ** 2, axis=1)
    df = np.where(fitted, np.count_nonzero(np.nan_to_num(coefs), axis=1), -1)
    bic = np.array([np.nan if not ok else (bic_value(n, r, d) if r > 0 else -np.inf) for ok, r, d in zip(fitted, rss, df)])
    bic_sel = np.where(fitted & (df < max_df), bic, np.inf)
    idx = int(np.argmin(bic_sel))
    return BICResult(grid, bic, rss, df, float(grid[idx]), idx, list(coefs))
