"""Variance estimation, confidence intervals and test statistics.

Variances are on the sqrt(n) scale: an interval is
``estimate -/+ z_{1-alpha/2} * sqrt(variance / n)``.

Omega is asymmetric, so quadratic forms use ``w = Omega' v`` and
``w' M w``, the sandwich matching the leading term ``v' Omega (score mean)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .core import ContrastVector
from .errors import ConfigurationError, DegenerateVarianceError, SchemaError
from .estimators import BMatrixEstimate, DebiasedEstimate, Pipeline, contrast
from .precision import PrecisionEstimate

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class GammaPsiEstimate:
    m1_hat: np.ndarray
    m2_hat: np.ndarray
    gamma_psi: np.ndarray
    psi: float
    n: int
    N: int
    b: np.ndarray | None = None

    @property
    def shrink_factor(self) -> float:
        return self.N * (2 * self.psi - self.psi**2) / (self.n + self.N)


@dataclass(frozen=True)
class InferenceResult:
    estimate: float
    std_error: float  # sqrt(variance / n)
    ci_low: float
    ci_high: float
    alpha: float
    z_stat: float
    method: str
    psi: float
    variance: float
    n: int

    @property
    def ci(self) -> tuple[float, float]:
        return (self.ci_low, self.ci_high)

    @property
    def half_length(self) -> float:
        return (self.ci_high - self.ci_low) / 2

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def _vec(v) -> np.ndarray:
    return v.v if isinstance(v, ContrastVector) else np.asarray(v, dtype=float).reshape(-1)


def _omega(omega) -> np.ndarray:
    return omega.omega if isinstance(omega, PrecisionEstimate) else np.asarray(omega, dtype=float)


def _checked(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise DegenerateVarianceError(f"{what} variance is not finite ({value})")
    if value < 0:
        raise DegenerateVarianceError(
            f"{what} plug-in variance is negative ({value:.4g}); the subtracted term overshoots, try psi closer to 0"
        )
    return value


def normal_quantile(q: float) -> float:
    return _STD_NORMAL.inv_cdf(q)


# ------------------------------------------------------------------------- S-SSL


def m1_hat(x, resid) -> np.ndarray:
    """(1/n) sum r_i^2 X_i X_i'."""
    xr = np.asarray(x) * np.asarray(resid)[:, None]
    return xr.T @ xr / xr.shape[0]


def estimate_gamma_psi(ds, split, m_hats, b_hat, theta_d, psi: float) -> GammaPsiEstimate:
    """Gamma_psi = M1 - N(2psi - psi^2)/(n+N) B'M2 with
    M1 = (1/n) sum r_i^2 X_i X_i' and M2 the fold average of
    (1/n_j) sum_{Dj*} r_i m^{-j}(X_i) X_i X_i', r = Y - X'theta_D."""
    coefs = theta_d.coefficients if hasattr(theta_d, "coefficients") else np.asarray(theta_d, dtype=float)
    x = ds.labeled_x
    resid = ds.labeled_y - x @ coefs
    m1 = m1_hat(x, resid)
    m2_parts = []
    for j in (1, 2):
        rows = split.labeled_fold(j)
        xl = x[rows]
        w = resid[rows] * m_hats[j - 1].evaluate(xl)
        m2_parts.append((xl * w[:, None]).T @ xl / xl.shape[0])
    m2 = (m2_parts[0] + m2_parts[1]) / 2
    b = b_hat.b if isinstance(b_hat, BMatrixEstimate) else np.asarray(b_hat, dtype=float)
    if b.shape != m1.shape:
        raise SchemaError(f"B has shape {b.shape}, expected {m1.shape}")
    n, N = ds.n, ds.N
    factor = N * (2 * psi - psi**2) / (n + N)
    gamma = m1 - factor * (b.T @ m2)
    return GammaPsiEstimate(m1, m2, gamma, float(psi), n, N, b)


def variance_sssl(v, omega, gamma_psi_est) -> float:
    vec = _vec(v)
    if np.linalg.norm(vec) == 0:
        raise SchemaError("contrast vector must be nonzero")
    gamma = gamma_psi_est.gamma_psi if isinstance(gamma_psi_est, GammaPsiEstimate) else np.asarray(gamma_psi_est)
    w = _omega(omega).T @ vec
    return _checked(float(w @ gamma @ w), "S-SSL")


# ------------------------------------------------------------------------- D-SSL


def dssl_variance_parts(ds, split, f_hats, theta_sd, omega):
    """Cross-fitted (sigma^2, Gamma) for D-SSL.

    sigma_j^2 is the mean of (Y - f^{-j})^2 over Dj*; Gamma_j is the mean over
    Dj = Dj* u Uj of eta^2 (Omega X)(Omega X)' with eta = f^{-j}(X) - theta_SD'X.
    Both are averaged over the two folds.
    """
    coefs = theta_sd.coefficients if hasattr(theta_sd, "coefficients") else np.asarray(theta_sd, dtype=float)
    om = _omega(omega)
    sig, gam = [], []
    for j in (1, 2):
        rows = split.labeled_fold(j)
        lab = ds.labeled_x[rows]
        f = f_hats[j - 1]
        sig.append(float(np.mean((ds.labeled_y[rows] - f.evaluate(lab)) ** 2)))
        pooled = np.vstack([lab, ds.unlabeled_x[split.unlabeled_fold(j)]])
        eta = f.evaluate(pooled) - pooled @ coefs
        ox = (pooled @ om.T) * eta[:, None]
        gam.append(ox.T @ ox / pooled.shape[0])
    return (sig[0] + sig[1]) / 2, (gam[0] + gam[1]) / 2


def variance_dssl(v, omega, sigma2_hat: float, gamma_hat, n: int, N: int) -> float:
    """v'(sigma^2 Omega + n/(n+N) Gamma)v."""
    vec = _vec(v)
    mat = sigma2_hat * _omega(omega) + (n / (n + N)) * np.asarray(gamma_hat, dtype=float)
    return _checked(float(vec @ mat @ vec), "D-SSL")


# ------------------------------------------------------------------------ D-Lasso


def variance_sandwich(v, omega, m1) -> float:
    """w' M1 w with w = Omega' v (heteroscedasticity-robust debiased lasso)."""
    w = _omega(omega).T @ _vec(v)
    return _checked(float(w @ np.asarray(m1) @ w), "sandwich")


# ---------------------------------------------------------------------- intervals


def make_interval(estimate: float, variance: float, n: int, alpha: float = 0.05, method: str = "", psi: float = 0.0) -> InferenceResult:
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 1:
        raise ConfigurationError("n must be positive")
    if not math.isfinite(variance) or variance < 0:
        raise DegenerateVarianceError(f"variance must be finite and nonnegative, got {variance}")
    if variance == 0:
        raise DegenerateVarianceError("zero variance gives a degenerate interval and an undefined test statistic")
    z = normal_quantile(1 - alpha / 2)
    sd = math.sqrt(variance)
    half = z * sd / math.sqrt(n)
    z_stat = math.sqrt(n) * estimate / sd
    if not math.isfinite(z_stat):
        raise DegenerateVarianceError("test statistic is not finite")
    return InferenceResult(
        float(estimate), sd / math.sqrt(n), estimate - half, estimate + half, float(alpha), z_stat, method, float(psi), float(variance), int(n)
    )


def p_value(result: InferenceResult) -> float:
    """Two-sided p-value of H0: contrast = 0."""
    return 2 * (1 - _STD_NORMAL.cdf(abs(result.z_stat)))


def method_variance(pipe: Pipeline, est: DebiasedEstimate, v) -> float:
    """Plug-in variance of v'theta for an estimate produced by ``pipe``."""
    ds = pipe.ds
    if est.method in ("dlasso1", "dlasso2"):
        resid = ds.labeled_y - ds.labeled_x @ est.initial.coefficients
        return variance_sandwich(v, est.omega_used, m1_hat(ds.labeled_x, resid))
    if est.method == "dssl":
        sig2, gam = dssl_variance_parts(ds, pipe.split, pipe.surrogates, est.initial, est.omega_used)
        return variance_dssl(v, est.omega_used, sig2, gam, ds.n, ds.N)
    if est.method == "sssl":
        b_hat = est.extras.get("b_hat")
        g = estimate_gamma_psi(ds, pipe.split, pipe.surrogates, b_hat, est.initial, est.psi)
        return variance_sssl(v, est.omega_used, g)
    raise ConfigurationError(f"no variance estimator for method {est.method!r}")


def infer(pipe: Pipeline, method: str, v, psi: float = 1.0, alpha: float = 0.05) -> InferenceResult:
    est = pipe.run(method, psi)
    var = method_variance(pipe, est, v)
    # without unlabeled rows psi has no effect, so the effective weight is 0
    return make_interval(contrast(est, v), var, pipe.ds.n, alpha, method, est.psi if pipe.ds.N else 0.0)
