"""Debiased point estimators: supervised D-Lasso, semi-supervised D-SSL and S-SSL.

Every estimator has the one-step form ``theta = initial + Omega @ correction``.
The estimators differ in the initial fit, in the target vector ``xi`` and in
which Gram matrix enters the correction:

* dlasso1 / dlasso2: CV lasso, plain ``X'Y/n``, labeled Gram, labeled-only or
  pooled Omega.
* dssl: semi-supervised Dantzig fit on (pooled Gram, cross-fitted xi), pooled
  Gram in the correction.
* sssl: supervised Dantzig fit, xi augmented by the projected surrogate
  difference, labeled Gram in the correction.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import ContrastVector, SemiSupervisedDataset, SplitPlan, make_split
from .errors import ConfigurationError, SchemaError
from .meanmodel import SplineAdditiveTrainer, crossfit_surrogates
from .precision import PrecisionEstimate, fit_nodewise
from .solvers import (
    SparseLinearFit,
    TuningResult,
    cv_lasso_from_stats,
    dantzig_lambda_max,
    fit_dantzig,
    fit_lasso,
    fold_ids,
    gram_fold_stats,
    lambda_grid,
    lasso_gram,
    tune_by_cv,
    tune_dantzig_custom,
)

logger = logging.getLogger(__name__)

METHODS = ("dlasso1", "dlasso2", "dssl", "sssl")
CV_FOLDS = 5


@dataclass(frozen=True)
class XiEstimate:
    xi: np.ndarray
    kind: str  # "plain", "crossfit_f" or "s_psi"
    psi: float | None = None
    parts: tuple = ()  # per-fold pieces kept for recomputation


@dataclass(frozen=True)
class BMatrixEstimate:
    b: np.ndarray  # column k regresses score component k on the surrogate vector
    column_lambdas: np.ndarray  # mean over folds of the chosen standard-form lambdas
    per_fold_columns: tuple  # (B^1, B^2)
    fold_lambdas: np.ndarray = field(default=None, repr=False)  # 2 x p
    warnings: tuple = ()


@dataclass(frozen=True)
class DebiasedEstimate:
    theta: np.ndarray
    method: str
    psi: float
    initial: SparseLinearFit
    omega_used: PrecisionEstimate
    xi_used: XiEstimate
    correction: np.ndarray
    gram_used: np.ndarray = field(repr=False, default=None)
    extras: dict = field(repr=False, default_factory=dict)

    @property
    def p(self) -> int:
        return self.theta.size

    def reconstruct(self) -> np.ndarray:
        return self.initial.coefficients + self.omega_used.omega @ self.correction


def contrast(est: DebiasedEstimate, v) -> float:
    vec = v.v if isinstance(v, ContrastVector) else np.asarray(v, dtype=float).reshape(-1)
    if vec.size != est.theta.size:
        raise SchemaError(f"contrast has length {vec.size}, expected p={est.theta.size}")
    return float(vec @ est.theta)


def _one_step(initial: SparseLinearFit, omega: PrecisionEstimate, xi: XiEstimate, gram, method, psi, extras=None):
    theta0 = initial.coefficients
    correction = xi.xi - gram @ theta0
    theta = theta0 + omega.omega @ correction
    return DebiasedEstimate(theta, method, float(psi), initial, omega, xi, correction, gram, dict(extras or {}))


def plain_xi(ds: SemiSupervisedDataset) -> XiEstimate:
    return XiEstimate(ds.xi_plain(), "plain")


def _fold_rows(ds, split, j):
    lab = ds.labeled_x[split.labeled_fold(j)]
    pooled = np.vstack([lab, ds.unlabeled_x[split.unlabeled_fold(j)]])
    return lab, pooled


# --------------------------------------------------------------- supervised fits


def fit_supervised_dantzig(ds: SemiSupervisedDataset, lam: float | None = None, seed: int = 0, rule: str = "minimum"):
    """Dantzig fit on (labeled Gram, X'Y/n); lambda by 5-fold CV when not given.

    Returns ``(fit, tuning)`` with ``tuning`` None for a supplied lambda.
    """
    tuning = None
    if lam is None:
        tuning = tune_by_cv("dantzig", ds.labeled_x, ds.labeled_y, CV_FOLDS, rule=rule, seed=seed)
        lam = tuning.chosen_lambda
    return fit_dantzig(ds.sigma_n(), ds.xi_plain(), lam), tuning


def fit_lasso_cv(ds: SemiSupervisedDataset, seed: int = 0, rule: str = "minimum"):
    tuning = tune_by_cv("lasso", ds.labeled_x, ds.labeled_y, CV_FOLDS, rule=rule, seed=seed)
    return fit_lasso(ds.labeled_x, ds.labeled_y, tuning.chosen_lambda), tuning


def one_step_dantzig(ds, theta_d: SparseLinearFit, omega: PrecisionEstimate) -> DebiasedEstimate:
    """Supervised debiased Dantzig: theta_D + Omega (X'Y/n - Sigma_n theta_D)."""
    return _one_step(theta_d, omega, plain_xi(ds), ds.sigma_n(), "dantzig_onestep", 0.0)


def fit_supervised_debiased(
    ds: SemiSupervisedDataset,
    variant: int,
    seed: int = 0,
    *,
    omega: PrecisionEstimate | None = None,
    initial: SparseLinearFit | None = None,
    rule: str = "minimum",
) -> DebiasedEstimate:
    """Debiased lasso. Variant 1 uses a labeled-only node-wise Omega, variant 2 the pooled one."""
    if variant not in (1, 2):
        raise ConfigurationError(f"variant must be 1 or 2, got {variant}")
    tuning = None
    if initial is None:
        initial, tuning = fit_lasso_cv(ds, seed, rule)
    if omega is None:
        if variant == 1:
            omega = fit_nodewise(ds.labeled_x, seed=seed, source="labeled-only")
        else:
            omega = fit_nodewise(ds.pooled_x, seed=seed, source="pooled")
    return _one_step(initial, omega, plain_xi(ds), ds.sigma_n(), f"dlasso{variant}", 0.0, {"tuning": tuning})


# ------------------------------------------------------------------ D-SSL pieces


def crossfit_xi(ds: SemiSupervisedDataset, split: SplitPlan, f_hats, keep=None) -> XiEstimate:
    """Cross-fitted target: average over folds j of
    mean_{Dj*} X(Y - f^{-j}) + mean_{Dj* u Uj} X f^{-j}.

    ``keep`` optionally masks labeled rows (used when tuning lambda by CV).
    """
    parts = []
    for j in (1, 2):
        rows = split.labeled_fold(j)
        if keep is not None:
            rows = rows[keep[rows]]
        lab = ds.labeled_x[rows]
        y = ds.labeled_y[rows]
        pooled = np.vstack([lab, ds.unlabeled_x[split.unlabeled_fold(j)]])
        f = f_hats[j - 1]
        f_lab = f.evaluate(lab)
        f_pool = f.evaluate(pooled)
        xi_j = lab.T @ y / lab.shape[0] - lab.T @ f_lab / lab.shape[0] + pooled.T @ f_pool / pooled.shape[0]
        parts.append(xi_j)
    return XiEstimate((parts[0] + parts[1]) / 2, "crossfit_f", None, tuple(parts))


def tune_lambda_sd(ds, split, f_hats, seed: int = 0, rule: str = "minimum") -> TuningResult:
    """5-fold CV over labeled rows; each training fold rebuilds both the pooled
    Gram (held-out labeled rows removed) and the cross-fitted target."""

    def build(tr):
        rows = np.vstack([ds.labeled_x[tr], ds.unlabeled_x])
        a = rows.T @ rows / rows.shape[0]
        return a, crossfit_xi(ds, split, f_hats, keep=tr).xi

    lam_max = dantzig_lambda_max(crossfit_xi(ds, split, f_hats).xi)
    return tune_dantzig_custom(build, ds.labeled_x, ds.labeled_y, CV_FOLDS, rule=rule, seed=seed, lam_max=lam_max)


def fit_theta_sd(ds, split, f_hats, lambda_sd: float, xi: XiEstimate | None = None) -> SparseLinearFit:
    """Dantzig fit with the pooled Gram and the cross-fitted target."""
    xi = crossfit_xi(ds, split, f_hats) if xi is None else xi
    return fit_dantzig(ds.sigma_pooled(), xi.xi, lambda_sd)


def fit_dssl(
    ds,
    split,
    f_hats,
    seed: int = 0,
    *,
    lambda_sd: float | None = None,
    omega: PrecisionEstimate | None = None,
    rule: str = "minimum",
) -> DebiasedEstimate:
    """theta_SD + Omega (xi - Sigma_pooled theta_SD)."""
    tuning = None
    if lambda_sd is None:
        tuning = tune_lambda_sd(ds, split, f_hats, seed, rule)
        lambda_sd = tuning.chosen_lambda
    xi = crossfit_xi(ds, split, f_hats)
    theta_sd = fit_theta_sd(ds, split, f_hats, lambda_sd, xi)
    if omega is None:
        omega = fit_nodewise(ds.pooled_x, seed=seed, source="pooled")
    extras = {"split": split, "surrogates": tuple(f_hats), "tuning": tuning}
    return _one_step(theta_sd, omega, xi, ds.sigma_pooled(), "dssl", 0.0, extras)


# ------------------------------------------------------------------ S-SSL pieces


def surrogate_vectors(ds, split, m_hats, j: int):
    """X m^{-j}(X) on the labeled rows of fold j and on the pooled fold rows."""
    lab, pooled = _fold_rows(ds, split, j)
    m = m_hats[j - 1]
    return lab * m.evaluate(lab)[:, None], pooled * m.evaluate(pooled)[:, None]


def fit_b_columns(covariates, responses, seed: int = 0, rule: str = "minimum", folds: int = CV_FOLDS):
    """Lasso of every response column on the (already centered) covariates.

    Returns ``(coefs p x K, lambdas K)``. Lambdas are on the standard
    ``(1/2m)|.|^2 + lam|.|_1`` scale, i.e. half the penalty of the
    un-halved least-squares objective.
    """
    Z = np.asarray(covariates, dtype=float)
    R = np.asarray(responses, dtype=float)
    m, p = Z.shape
    K = R.shape[1]
    coefs = np.zeros((p, K))
    lams = np.zeros(K)
    G = Z.T @ Z / m
    C = Z.T @ R / m
    ids = fold_ids(m, folds, seed)
    Gt, ct, Gv, cv, yyv = gram_fold_stats(Z, R, ids, folds)
    for k in range(K):
        lam_max = np.abs(C[:, k]).max()
        if lam_max == 0.0:
            continue
        tun = cv_lasso_from_stats(Gt, ct[:, :, k], Gv, cv[:, :, k], yyv[:, k], lambda_grid(lam_max), rule)
        fit, _ = lasso_gram(G, C[:, k], tun.chosen_lambda)
        coefs[:, k] = fit.coefficients
        lams[k] = tun.chosen_lambda
    return coefs, lams


def fit_b_matrix(ds, split, m_hats, theta_d: SparseLinearFit, rule: str = "minimum", seed: int = 0) -> BMatrixEstimate:
    """Per fold j, regress X_k (Y - X'theta_D) on X m^{-j}(X) - mu^j over the
    labeled rows of fold j (mu^j is the labeled fold mean); average the folds."""
    resid = ds.labeled_y - ds.labeled_x @ theta_d.coefficients
    mats, lams, warns = [], [], []
    for j in (1, 2):
        rows = split.labeled_fold(j)
        w_lab, _ = surrogate_vectors(ds, split, m_hats, j)
        Z = w_lab - w_lab.mean(axis=0)
        R = ds.labeled_x[rows] * resid[rows][:, None]
        if not np.any(Z):
            warns.append(f"surrogate covariates vanish on fold {j}; B columns set to zero")
            logger.warning("fold %d: surrogate covariates identically zero", j)
            mats.append(np.zeros((ds.p, ds.p)))
            lams.append(np.zeros(ds.p))
            continue
        b, lam = fit_b_columns(Z, R, seed + j, rule)
        mats.append(b)
        lams.append(lam)
    fold_lams = np.vstack(lams)
    return BMatrixEstimate((mats[0] + mats[1]) / 2, fold_lams.mean(axis=0), tuple(mats), fold_lams, tuple(warns))


def surrogate_gap(ds, split, m_hats) -> tuple:
    """Per fold: labeled-fold mean minus pooled-fold mean of X m^{-j}(X)."""
    gaps = []
    for j in (1, 2):
        w_lab, w_pool = surrogate_vectors(ds, split, m_hats, j)
        gaps.append(w_lab.mean(axis=0) - w_pool.mean(axis=0))
    return tuple(gaps)


def compute_xi_s(ds, split, m_hats, b_hat: BMatrixEstimate, psi: float) -> XiEstimate:
    """X'Y/n - (psi/2) B' sum_j (labeled-fold mean - pooled-fold mean of X m^{-j})."""
    if not np.isfinite(psi):
        raise ConfigurationError("psi must be finite")
    gaps = surrogate_gap(ds, split, m_hats)
    b = b_hat.b if isinstance(b_hat, BMatrixEstimate) else np.asarray(b_hat, dtype=float)
    xi = ds.xi_plain() - (psi / 2) * (b.T @ (gaps[0] + gaps[1]))
    return XiEstimate(xi, "s_psi", float(psi), gaps)


def fit_sssl(
    ds,
    split,
    m_hats,
    psi: float = 1.0,
    seed: int = 0,
    *,
    omega: PrecisionEstimate | None = None,
    theta_d: SparseLinearFit | None = None,
    b_hat: BMatrixEstimate | None = None,
    rule: str = "minimum",
) -> DebiasedEstimate:
    """theta_D + Omega (xi_S - Sigma_n theta_D) with the labeled Gram and pooled Omega."""
    tuning = None
    if theta_d is None:
        theta_d, tuning = fit_supervised_dantzig(ds, seed=seed, rule=rule)
    if b_hat is None:
        b_hat = fit_b_matrix(ds, split, m_hats, theta_d, rule, seed)
    if omega is None:
        omega = fit_nodewise(ds.pooled_x, seed=seed, source="pooled")
    xi = compute_xi_s(ds, split, m_hats, b_hat, psi)
    extras = {"split": split, "surrogates": tuple(m_hats), "b_hat": b_hat, "tuning": tuning}
    return _one_step(theta_d, omega, xi, ds.sigma_n(), "sssl", psi, extras)


# ---------------------------------------------------------------------- pipeline


class Pipeline:
    """Shared nuisance fits for one dataset and seed.

    Methods run on the same split, surrogates and Omega, so results for
    different methods or psi values are directly comparable and nothing is
    fitted twice.
    """

    def __init__(self, ds: SemiSupervisedDataset, seed: int, trainer=None, rule: str = "minimum", timings=None):
        self.ds = ds
        self.seed = int(seed)
        self.trainer = trainer or SplineAdditiveTrainer()
        self.rule = rule
        self.timings = timings if timings is not None else {}
        self._results = {}

    def _timed(self, name, fn):
        t0 = time.perf_counter()
        out = fn()
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0
        return out

    @cached_property
    def split(self) -> SplitPlan:
        return make_split(self.ds.n, self.ds.N, self.seed)

    @cached_property
    def surrogates(self) -> tuple:
        return self._timed("surrogates", lambda: crossfit_surrogates(self.ds, self.split, self.trainer, self.seed))

    @cached_property
    def omega_pooled(self) -> PrecisionEstimate:
        return self._timed("omega", lambda: fit_nodewise(self.ds.pooled_x, seed=self.seed, source="pooled"))

    @cached_property
    def omega_labeled(self) -> PrecisionEstimate:
        if self.ds.N == 0:
            return self.omega_pooled
        return self._timed("omega", lambda: fit_nodewise(self.ds.labeled_x, seed=self.seed, source="labeled-only"))

    @cached_property
    def lasso_fit(self):
        return self._timed("initial", lambda: fit_lasso_cv(self.ds, self.seed, self.rule))

    @cached_property
    def dantzig_fit(self):
        return self._timed("initial", lambda: fit_supervised_dantzig(self.ds, seed=self.seed, rule=self.rule))

    @cached_property
    def b_hat(self) -> BMatrixEstimate:
        theta_d = self.dantzig_fit[0]
        return self._timed("b_matrix", lambda: fit_b_matrix(self.ds, self.split, self.surrogates, theta_d, self.rule, self.seed))

    def run(self, method: str, psi: float = 1.0) -> DebiasedEstimate:
        key = (method, float(psi) if method == "sssl" else 0.0)
        if key not in self._results:
            self._results[key] = self._run(method, psi)
        return self._results[key]

    def _run(self, method: str, psi: float) -> DebiasedEstimate:
        if method in ("dlasso1", "dlasso2"):
            variant = int(method[-1])
            omega = self.omega_labeled if variant == 1 else self.omega_pooled
            initial, tuning = self.lasso_fit
            est = fit_supervised_debiased(self.ds, variant, self.seed, omega=omega, initial=initial)
            est.extras["tuning"] = tuning
            return est
        if method == "dssl":
            return self._timed(
                "dssl", lambda: fit_dssl(self.ds, self.split, self.surrogates, self.seed, omega=self.omega_pooled, rule=self.rule)
            )
        if method == "sssl":
            theta_d, tuning = self.dantzig_fit
            b_hat = self.b_hat if psi != 0 else BMatrixEstimate(
                np.zeros((self.ds.p, self.ds.p)), np.zeros(self.ds.p), (np.zeros((self.ds.p, self.ds.p)),) * 2,
                np.zeros((2, self.ds.p)), ("psi = 0: B not fitted",),
            )
            est = fit_sssl(
                self.ds, self.split, self.surrogates, psi, self.seed, omega=self.omega_pooled, theta_d=theta_d, b_hat=b_hat
            )
            est.extras["tuning"] = tuning
            return est
        raise ConfigurationError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
