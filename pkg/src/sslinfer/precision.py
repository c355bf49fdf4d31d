"""Node-wise lasso estimate of the precision matrix.

Each column ``k`` is regressed on the others with objective
``(1/m)|x_k - X_{-k} g|^2 + 2 lam_k |g|_1``, which is the standard lasso
``(1/2m)|.|^2 + lam_k |g|_1`` scaled by two. With residual variances
``tau_k^2 = (1/m)(x_k - X_{-k} g_k)' x_k`` the estimate is
``Omega = diag(tau^-2) C`` where ``C`` has unit diagonal and ``-g_k`` off it.

The result is not symmetric and is used as is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateColumnError, InsufficientDataError
from . import _kernels
from .solvers import CV_PATIENCE, LASSO_TOL, MAX_SWEEPS, N_LAMBDA, fold_ids, lambda_grid, lasso_gram, select_lambda


@dataclass(frozen=True)
class PrecisionEstimate:
    omega: np.ndarray
    gammas: tuple  # p arrays of length p-1, column k removed
    taus_sq: np.ndarray
    lambdas: np.ndarray
    source: str = "pooled"
    kkt: np.ndarray | None = None

    @classmethod
    def from_matrix(cls, omega, source: str = "external") -> "PrecisionEstimate":
        """Wrap a precomputed precision matrix (e.g. a direct inverse)."""
        omega = np.asarray(omega, dtype=float)
        p = omega.shape[0]
        diag = np.diag(omega).copy()
        gam = tuple(np.delete(-omega[k] / diag[k], k) for k in range(p))
        return cls(omega, gam, 1.0 / diag, np.zeros(p), source)

    @property
    def p(self) -> int:
        return self.omega.shape[0]

    def gamma_matrix(self) -> np.ndarray:
        """p x p matrix whose row k holds gamma_k with a zero at position k."""
        p = self.p
        out = np.zeros((p, p))
        for k, g in enumerate(self.gammas):
            out[k, np.arange(p) != k] = g
        return out


def _column_cv(k, fold_stats, grid, rule):
    Gt, Gv = fold_stats
    errs, _ = _kernels.lasso_cv_path(
        Gt, np.ascontiguousarray(Gt[:, :, k]), Gv, np.ascontiguousarray(Gv[:, :, k]),
        np.ascontiguousarray(Gv[:, k, k]), grid, LASSO_TOL, MAX_SWEEPS, k, CV_PATIENCE,
    )
    return grid[select_lambda(grid, errs, rule)]


def fit_nodewise(
    x_pooled,
    lambdas=None,
    seed: int = 0,
    *,
    folds: int = 5,
    rule: str = "minimum",
    source: str = "pooled",
    order=None,
    n_lambda: int = N_LAMBDA,
) -> PrecisionEstimate:
    """Fit the node-wise lasso on centered rows ``x_pooled``.

    ``lambdas`` may be a length-p vector; when ``None`` each lambda_k is
    chosen by ``folds``-fold CV with a shared, seeded fold assignment.
    ``order`` permutes the column processing order (results do not depend
    on it).
    """
    x = np.asarray(x_pooled, dtype=float)
    m, p = x.shape
    if m < 2 or p < 2:
        raise InsufficientDataError(f"node-wise lasso needs m >= 2 and p >= 2, got m={m}, p={p}")
    G = np.ascontiguousarray(x.T @ x / m)
    fold_stats = None
    if lambdas is None:
        ids = fold_ids(m, folds, seed)
        Gt = np.empty((folds, p, p))
        Gv = np.empty((folds, p, p))
        for f in range(folds):
            tr, va = x[ids != f], x[ids == f]
            Gt[f] = tr.T @ tr / tr.shape[0]
            Gv[f] = va.T @ va / va.shape[0]
        fold_stats = (Gt, Gv)
        lam_vec = np.empty(p)
    else:
        lam_vec = np.broadcast_to(np.asarray(lambdas, dtype=float), (p,)).copy()

    coefs = np.zeros((p, p))
    kkt = np.zeros(p)
    cols = range(p) if order is None else [int(k) for k in order]
    for k in cols:
        if fold_stats is not None:
            off = np.abs(np.delete(G[:, k], k)).max()
            grid = lambda_grid(off, n_lambda)
            lam_vec[k] = _column_cv(k, fold_stats, grid, rule)
        fit, _ = lasso_gram(G, G[:, k], lam_vec[k], exclude=k)
        coefs[k] = fit.coefficients
        kkt[k] = fit.dual_gap_or_violation

    taus = np.array([G[k, k] - coefs[k] @ G[:, k] for k in range(p)])
    for k in range(p):
        if taus[k] <= 1e-12:
            raise DegenerateColumnError(k, float(taus[k]))
    C = np.eye(p) - coefs
    omega = C / taus[:, None]
    gammas = tuple(np.delete(coefs[k], k) for k in range(p))
    return PrecisionEstimate(omega, gammas, taus, lam_vec, source, kkt)


def nodewise_kkt(x_pooled, est: PrecisionEstimate) -> np.ndarray:
    """Per-column sup-norm of (1/m) X_{-k}'(x_k - X_{-k} g_k)."""
    x = np.asarray(x_pooled, dtype=float)
    m, p = x.shape
    out = np.empty(p)
    for k in range(p):
        rest = np.delete(x, k, axis=1)
        out[k] = np.abs(rest.T @ (x[:, k] - rest @ est.gammas[k]) / m).max()
    return out


def inverse_defect(est, sigma_hat) -> float:
    """max-norm of I - Omega Sigma_hat (diagnostic)."""
    omega = est.omega if isinstance(est, PrecisionEstimate) else np.asarray(est, dtype=float)
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    if omega.shape != sigma_hat.shape:
        raise ValueError(f"shape mismatch {omega.shape} vs {sigma_hat.shape}")
    return float(np.abs(np.eye(omega.shape[0]) - omega @ sigma_hat).max())


def defect_bound(est: PrecisionEstimate) -> float:
    return float(np.max(est.lambdas / est.taus_sq))
