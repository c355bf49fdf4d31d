"""M-estimation version of the dependable estimator.

A loss exposes its value, gradient and Hessian per observation. The
one-step estimator is

    theta = theta_MD + H^{-1} [ s_bar - (psi/2) B' sum_j gap_j ]

where ``s = -grad L`` is the per-row score at the initial fit, ``H`` the mean
Hessian over all labeled rows, ``B`` regresses the score on the centered
surrogate vector fold-wise, and ``gap_j`` is the labeled-fold mean minus
the pooled-fold mean of the surrogate vector. For squared loss with
surrogate vector ``X m(X)`` this is the S-SSL estimator with
``Omega = Sigma_n^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import NoConvergenceError, SingularHessianError
from .estimators import BMatrixEstimate, DebiasedEstimate, XiEstimate, fit_b_columns
from .precision import PrecisionEstimate
from .solvers import SparseLinearFit, fit_dantzig

MAX_COND = 1e12


class MLoss(Protocol):
    name: str
    affine_gradient: bool

    def value(self, x, y, theta) -> float: ...
    def gradient(self, x, y, theta) -> np.ndarray: ...
    def hessian(self, x, y, theta) -> np.ndarray: ...


class SquaredLoss:
    """L = (y - x'theta)^2 / 2."""

    name = "squared"
    affine_gradient = True

    def value(self, x, y, theta) -> float:
        return 0.5 * float(y - np.dot(x, theta)) ** 2

    def gradient(self, x, y, theta) -> np.ndarray:
        return -np.asarray(x, dtype=float) * float(y - np.dot(x, theta))

    def hessian(self, x, y, theta) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.outer(x, x)

    # vectorised forms over rows
    def gradients(self, X, Y, theta) -> np.ndarray:
        return -X * (Y - X @ theta)[:, None]

    def mean_hessian(self, X, Y, theta) -> np.ndarray:
        return X.T @ X / X.shape[0]

    def linear_system(self, ds):
        """(a, b) such that the mean gradient is a theta - b."""
        return ds.sigma_n(), ds.xi_plain()


LOSSES = {"squared": SquaredLoss}


def _gradients(loss, X, Y, theta):
    if hasattr(loss, "gradients"):
        return loss.gradients(X, Y, theta)
    return np.array([loss.gradient(x, y, theta) for x, y in zip(X, Y)])


def _mean_hessian(loss, X, Y, theta):
    if hasattr(loss, "mean_hessian"):
        return loss.mean_hessian(X, Y, theta)
    return sum(loss.hessian(x, y, theta) for x, y in zip(X, Y)) / X.shape[0]


def fit_m_dantzig(ds, loss, lam: float, start=None, *, max_iter: int = 50, tol: float = 1e-8) -> SparseLinearFit:
    """min |theta|_1 subject to |mean gradient(theta)|_inf <= lam.

    Losses with affine gradients are solved in one LP. Otherwise the
    gradient is linearised at the current iterate and the LP re-solved
    until the iterate moves less than ``tol``.
    """
    if getattr(loss, "affine_gradient", False) and hasattr(loss, "linear_system"):
        a, b = loss.linear_system(ds)
        return fit_dantzig(a, b, lam)
    X, Y = ds.labeled_x, ds.labeled_y
    theta = np.zeros(ds.p) if start is None else np.asarray(start, dtype=float).copy()
    trail = [theta.copy()]
    for _ in range(max_iter):
        H = _mean_hessian(loss, X, Y, theta)
        g = _gradients(loss, X, Y, theta).mean(axis=0)
        fit = fit_dantzig((H + H.T) / 2, H @ theta - g, lam)
        step = np.abs(fit.coefficients - theta).max()
        theta = np.array(fit.coefficients)
        trail.append(theta.copy())
        if step < tol:
            return fit
    raise NoConvergenceError("linearised Dantzig iterations did not settle", best_iterate=theta, trail=trail)


@dataclass(frozen=True)
class ProductSurrogate:
    """Surrogate vector x * m(x) built from a scalar surrogate ``m``."""

    m: object

    def evaluate(self, x_new) -> np.ndarray:
        x = np.asarray(x_new, dtype=float)
        return x * self.m.evaluate(x)[:, None]


def hessian_inverse(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > MAX_COND:
        raise SingularHessianError(f"empirical Hessian is singular or ill-conditioned (cond = {cond:.3e})")
    return np.linalg.inv(H)


def fit_m_sssl(
    ds,
    split,
    loss,
    m_vec_hats,
    psi: float = 1.0,
    seed: int = 0,
    *,
    lam: float | None = None,
    initial: SparseLinearFit | None = None,
    rule: str = "minimum",
) -> DebiasedEstimate:
    """One-step M-estimator with the empirical Hessian inverse in place of Omega."""
    if initial is None:
        if lam is None:
            from .estimators import fit_supervised_dantzig

            if getattr(loss, "affine_gradient", False):
                initial, _ = fit_supervised_dantzig(ds, seed=seed, rule=rule)
            else:
                raise NoConvergenceError("lambda must be supplied for non-quadratic losses")
        else:
            initial = fit_m_dantzig(ds, loss, lam)
    theta0 = initial.coefficients
    X, Y = ds.labeled_x, ds.labeled_y
    scores = -_gradients(loss, X, Y, theta0)
    H = _mean_hessian(loss, X, Y, theta0)
    Hinv = hessian_inverse(H)

    mats, lams, gaps = [], [], []
    for j in (1, 2):
        rows = split.labeled_fold(j)
        lab = X[rows]
        pooled = np.vstack([lab, ds.unlabeled_x[split.unlabeled_fold(j)]])
        w_lab = m_vec_hats[j - 1].evaluate(lab)
        w_pool = m_vec_hats[j - 1].evaluate(pooled)
        gaps.append(w_lab.mean(axis=0) - w_pool.mean(axis=0))
        Z = w_lab - w_lab.mean(axis=0)
        if not np.any(Z):
            mats.append(np.zeros((Z.shape[1], ds.p)))
            lams.append(np.zeros(ds.p))
            continue
        b, lam_j = fit_b_columns(Z, scores[rows], seed + j, rule)
        mats.append(b)
        lams.append(lam_j)
    fold_lams = np.vstack(lams)
    b_hat = BMatrixEstimate((mats[0] + mats[1]) / 2, fold_lams.mean(axis=0), tuple(mats), fold_lams)
    xi = scores.mean(axis=0) - (psi / 2) * (b_hat.b.T @ (gaps[0] + gaps[1]))
    omega = PrecisionEstimate.from_matrix(Hinv, source="hessian-inverse")
    correction = xi
    theta = theta0 + Hinv @ correction
    return DebiasedEstimate(
        theta,
        f"m-sssl[{loss.name}]",
        float(psi),
        initial,
        omega,
        XiEstimate(xi, "s_psi", float(psi), tuple(gaps)),
        correction,
        None,
        {"b_hat": b_hat, "hessian": H, "hessian_cond": float(np.linalg.cond(H)), "split": split},
    )
