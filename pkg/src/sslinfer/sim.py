"""Simulation models, replication driver and table metrics.

Covariates: U ~ N(0, Sigma) with Sigma_jk = 0.3^|j-k|, X_1 = |U_1|, X_j = U_j.

* Model 1 (non-additive): Y = 0.6 (X1 + X2)^2 + 0.4 X4^3 - X5 + 2 X6 + eps
* Model 2 (additive):     Y = 0.5 X1^2 + 0.8 X3^3 - (X4 - 2)^2 + 2 (X5 + 1)^2 + 2 X6 + eps

Each replication r draws from a generator seeded by a stable 64-bit mix of
``(seed, r)`` (numpy ``SeedSequence``), then runs every method on the same
split and nuisance fits. Normals come from numpy's PCG64 ``Generator``
(ziggurat sampler), so records do not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .core import ContrastVector, SemiSupervisedDataset
from .errors import ConfigurationError, SSLInferError
from .estimators import METHODS, Pipeline
from .inference import infer

logger = logging.getLogger(__name__)

RHO = 0.3
MODEL_TRUTH = {
    1: (1.48, 1.04, 0.0, 1.2, -1.0, 2.0),
    2: (1.1, 0.0, 2.4, 4.0, 4.0, 2.0),
}
DEFAULT_TARGETS = {1: (1, 2, 4, 5, 6), 2: (1, 3, 4, 5, 6)}
CSV_COLUMNS = ("method", "target", "bias", "sd", "rmse", "half_len", "coverage", "reps_used", "reps_failed")
GENERATOR = "numpy.random.Generator(PCG64), SeedSequence([seed, rep]) per replication, ziggurat normals"


def truth_vector(model: int, p: int) -> np.ndarray:
    if model not in MODEL_TRUTH:
        raise ConfigurationError(f"model must be 1 or 2, got {model}")
    out = np.zeros(p)
    out[:6] = MODEL_TRUTH[model]
    return out


def ar1_covariance(p: int, rho: float = RHO) -> np.ndarray:
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def draw_covariates(rng: np.random.Generator, m: int, p: int) -> np.ndarray:
    L = np.linalg.cholesky(ar1_covariance(p))
    U = rng.standard_normal((m, p)) @ L.T
    U[:, 0] = np.abs(U[:, 0])
    return U


def mean_function(model: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if model == 1:
        return 0.6 * (x[:, 0] + x[:, 1]) ** 2 + 0.4 * x[:, 3] ** 3 - x[:, 4] + 2 * x[:, 5]
    if model == 2:
        return 0.5 * x[:, 0] ** 2 + 0.8 * x[:, 2] ** 3 - (x[:, 3] - 2) ** 2 + 2 * (x[:, 4] + 1) ** 2 + 2 * x[:, 5]
    raise ConfigurationError(f"model must be 1 or 2, got {model}")


def generate(model: int, n: int, N: int, p: int, seed) -> tuple[SemiSupervisedDataset, np.ndarray]:
    """Draw n labeled and N unlabeled rows; returns the centered dataset and truth."""
    if p < 7:
        raise ConfigurationError(f"p must be at least 7, got {p}")
    truth = truth_vector(model, p)
    rng = np.random.default_rng(seed)
    x = draw_covariates(rng, n + N, p)
    y = mean_function(model, x[:n]) + rng.standard_normal(n)
    return SemiSupervisedDataset.from_arrays(x[:n], y, x[n:]), truth


def replication_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(rep)]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SimConfig:
    model: int = 1
    n: int = 300
    ratio: float = 8
    p: int = 100
    reps: int = 50
    psi: float = 1.0
    methods: tuple = METHODS
    targets: tuple = ()  # 1-based component indices; empty means the model default
    contrast: tuple = ()  # optional full contrast vector, reported as target "contrast"
    seed: int = 0
    alpha: float = 0.05

    def __post_init__(self):
        if self.model not in (1, 2):
            raise ConfigurationError(f"model must be 1 or 2, got {self.model}")
        if self.reps < 1:
            raise ConfigurationError("reps must be at least 1")
        if self.p < 7:
            raise ConfigurationError(f"p must be at least 7, got {self.p}")
        if self.n < 10:
            raise ConfigurationError("n must be at least 10")
        if not 0 < self.alpha < 1:
            raise ConfigurationError("alpha must lie in (0, 1)")
        object.__setattr__(self, "methods", tuple(self.methods))
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigurationError(f"unknown methods {unknown}; expected a subset of {list(METHODS)}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        for t in self.targets:
            if not 1 <= t <= self.p:
                raise ConfigurationError(f"target {t} outside 1..{self.p}")
        object.__setattr__(self, "contrast", tuple(float(c) for c in self.contrast))
        if self.contrast and len(self.contrast) != self.p:
            raise ConfigurationError(f"contrast has length {len(self.contrast)}, expected p={self.p}")

    @property
    def N(self) -> int:
        return int(round(self.ratio * self.n))

    def target_vectors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        if self.contrast:
            out.append(("contrast", ContrastVector(np.array(self.contrast)).v))
        targets = self.targets or (() if self.contrast else DEFAULT_TARGETS[self.model])
        for t in targets:
            out.append((f"theta{t}", ContrastVector.basis(self.p, t - 1).v))
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def _replicate(config: SimConfig, rep: int, extra_methods=None) -> list[dict]:
    seed = replication_seed(config.seed, rep)
    records = []
    with threadpool_limits(1):
        ds, truth = generate(config.model, config.n, config.N, config.p, seed)
        pipe = Pipeline(ds, seed)
        vectors = config.target_vectors()
        runners = {m: None for m in config.methods}
        runners.update(extra_methods or {})
        for method, runner in runners.items():
            for name, v in vectors:
                rec = {"rep": rep, "seed": seed, "method": method, "target": name, "truth": float(v @ truth)}
                try:
                    if runner is None:
                        res = infer(pipe, method, v, config.psi if method == "sssl" else 1.0, config.alpha)
                    else:
                        res = runner(ds, truth, v, config.alpha)
                    rec.update(estimate=res.estimate, std_error=res.std_error, ci_low=res.ci_low, ci_high=res.ci_high, error=None)
                except (SSLInferError, ArithmeticError, np.linalg.LinAlgError) as exc:
                    logger.warning("rep %d method %s target %s failed: %s", rep, method, name, exc)
                    rec.update(estimate=math.nan, std_error=math.nan, ci_low=math.nan, ci_high=math.nan, error=type(exc).__name__)
                records.append(rec)
        timings = dict(pipe.timings)
    for rec in records:
        rec["timings"] = timings
    return records


def _worker_cap(workers: int | None) -> int:
    cap = os.environ.get("SSLINFER_THREADS")
    w = workers if workers is not None else (os.cpu_count() or 1)
    if cap:
        try:
            w = min(w, max(int(cap), 1))
        except ValueError:
            raise ConfigurationError(f"SSLINFER_THREADS must be an integer, got {cap!r}") from None
    return max(int(w), 1)


@dataclass
class SimReport:
    config: SimConfig
    rows: list
    records: list
    truth: np.ndarray
    manifest: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: ("" if row[k] is None else (repr(row[k]) if isinstance(row[k], float) else row[k])) for k in CSV_COLUMNS})
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v

        records = [{k: clean(v) for k, v in r.items() if k != "timings"} for r in self.records]
        return {
            "config": self.config.to_dict(),
            "truth": [float(t) for t in self.truth],
            "rows": [{k: clean(v) for k, v in r.items()} for r in self.rows],
            "records": records,
            "manifest": self.manifest,
        }


def aggregate(records: list[dict], methods, targets, alpha: float | None = None) -> list[dict]:
    """Table rows per (method, target) from raw records; failed records are excluded."""
    rows = []
    ordered = sorted(records, key=lambda r: (r["rep"], r["method"], r["target"]))
    for method in methods:
        for target in targets:
            recs = [r for r in ordered if r["method"] == method and r["target"] == target]
            ok = [r for r in recs if r["error"] is None]
            failed = len(recs) - len(ok)
            if not ok:
                rows.append(dict(method=method, target=target, bias=None, sd=None, rmse=None, half_len=None,
                                 coverage=None, reps_used=0, reps_failed=failed))
                continue
            est = np.array([r["estimate"] for r in ok])
            truth = ok[0]["truth"]
            err = est - truth
            half = np.array([(r["ci_high"] - r["ci_low"]) / 2 for r in ok])
            cover = np.array([r["ci_low"] <= r["truth"] <= r["ci_high"] for r in ok], dtype=float)
            rows.append(dict(
                method=method,
                target=target,
                bias=float(err.mean()),
                sd=float(est.std(ddof=1)) if est.size > 1 else None,
                rmse=float(np.sqrt(np.mean(err**2))),
                half_len=float(half.mean()),
                coverage=float(cover.mean()),
                reps_used=int(est.size),
                reps_failed=failed,
            ))
    return rows


def run_simulation(config: SimConfig, workers: int | None = 1, extra_methods=None) -> SimReport:
    """Run ``config.reps`` replications; ``extra_methods`` maps names to
    ``fn(ds, truth, v, alpha) -> InferenceResult`` (in-process only)."""
    nworkers = _worker_cap(workers)
    reps = range(config.reps)
    if nworkers == 1 or config.reps == 1 or extra_methods:
        chunks = [_replicate(config, r, extra_methods) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=min(nworkers, config.reps)) as pool:
            chunks = list(pool.map(_replicate, [config] * config.reps, reps))
    records = sorted((rec for chunk in chunks for rec in chunk), key=lambda r: (r["rep"], r["method"], r["target"]))
    methods = list(config.methods) + [m for m in (extra_methods or {}) if m not in config.methods]
    targets = [name for name, _ in config.target_vectors()]
    rows = aggregate(records, methods, targets)
    return SimReport(config, rows, records, truth_vector(config.model, config.p))


def report_json(report: SimReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2, sort_keys=True)
