"""Data model, centering, cross-fitting splits and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, ParseError, SchemaError


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SemiSupervisedDataset:
    """Labeled ``(X, Y)`` plus unlabeled ``X``, stored centered.

    ``column_means`` and ``y_mean`` are the offsets that were subtracted, so
    raw data are ``labeled_x + column_means`` and ``labeled_y + y_mean``.
    """

    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray
    column_means: np.ndarray
    y_mean: float
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        lx = np.asarray(self.labeled_x, dtype=float)
        ly = np.asarray(self.labeled_y, dtype=float).reshape(-1)
        ux = np.asarray(self.unlabeled_x, dtype=float)
        if lx.ndim != 2:
            raise SchemaError("labeled_x must be a 2-D matrix")
        p = lx.shape[1]
        if ux.size == 0:
            ux = ux.reshape(0, p)
        if ux.ndim != 2 or ux.shape[1] != p:
            raise SchemaError(f"unlabeled_x has {ux.shape[-1]} columns, expected {p}")
        if ly.shape[0] != lx.shape[0]:
            raise SchemaError(f"labeled_y has {ly.shape[0]} entries, labeled_x has {lx.shape[0]} rows")
        if lx.shape[0] < 2:
            raise InsufficientDataError(f"need n >= 2 labeled rows, got {lx.shape[0]}")
        object.__setattr__(self, "labeled_x", _frozen(lx))
        object.__setattr__(self, "labeled_y", _frozen(ly))
        object.__setattr__(self, "unlabeled_x", _frozen(ux))
        object.__setattr__(self, "column_means", _frozen(np.asarray(self.column_means, dtype=float).reshape(p)))
        object.__setattr__(self, "y_mean", float(self.y_mean))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @classmethod
    def from_arrays(cls, labeled_x, labeled_y, unlabeled_x=None, feature_names=()) -> "SemiSupervisedDataset":
        """Center raw arrays: covariates by the pooled n+N mean, response by its labeled mean."""
        lx = np.asarray(labeled_x, dtype=float)
        ly = np.asarray(labeled_y, dtype=float).reshape(-1)
        if lx.ndim != 2:
            raise SchemaError("labeled_x must be a 2-D matrix")
        ux = np.empty((0, lx.shape[1])) if unlabeled_x is None else np.asarray(unlabeled_x, dtype=float)
        if ux.size == 0:
            ux = ux.reshape(0, lx.shape[1])
        if ux.ndim != 2 or ux.shape[1] != lx.shape[1]:
            raise SchemaError(f"unlabeled_x has {ux.shape[-1]} columns, expected {lx.shape[1]}")
        if lx.shape[0] < 2:
            raise InsufficientDataError(f"need n >= 2 labeled rows, got {lx.shape[0]}")
        means = np.vstack([lx, ux]).mean(axis=0)
        y_mean = ly.mean()
        return cls(lx - means, ly - y_mean, ux - means, means, y_mean, feature_names)

    def recentered(self) -> "SemiSupervisedDataset":
        """Center again; offsets accumulate so the raw data stay recoverable."""
        again = SemiSupervisedDataset.from_arrays(self.labeled_x, self.labeled_y, self.unlabeled_x, self.feature_names)
        return SemiSupervisedDataset(
            again.labeled_x,
            again.labeled_y,
            again.unlabeled_x,
            self.column_means + again.column_means,
            self.y_mean + again.y_mean,
            self.feature_names,
        )

    @property
    def n(self) -> int:
        return self.labeled_x.shape[0]

    @property
    def N(self) -> int:
        return self.unlabeled_x.shape[0]

    @property
    def p(self) -> int:
        return self.labeled_x.shape[1]

    @property
    def pooled_x(self) -> np.ndarray:
        return np.vstack([self.labeled_x, self.unlabeled_x])

    def sigma_n(self) -> np.ndarray:
        """Labeled Gram matrix (1/n) X'X."""
        x = self.labeled_x
        return x.T @ x / self.n

    def sigma_pooled(self) -> np.ndarray:
        """Pooled Gram matrix over all n+N covariate rows."""
        x = self.pooled_x
        return x.T @ x / x.shape[0]

    def xi_plain(self) -> np.ndarray:
        """(1/n) sum_i X_i Y_i."""
        return self.labeled_x.T @ self.labeled_y / self.n

    def without_unlabeled(self) -> "SemiSupervisedDataset":
        return SemiSupervisedDataset.from_arrays(
            self.labeled_x + self.column_means,
            self.labeled_y + self.y_mean,
            None,
            self.feature_names,
        )


@dataclass(frozen=True)
class SplitPlan:
    """Two-fold partition of labeled rows (``d1_star``/``d2_star``) and unlabeled rows (``u1``/``u2``)."""

    d1_star: np.ndarray
    d2_star: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    seed: int
    n: int = field(default=0)
    N: int = field(default=0)

    def __post_init__(self):
        for name in ("d1_star", "d2_star", "u1", "u2"):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype=np.int64))

    def labeled_fold(self, j: int) -> np.ndarray:
        """Labeled indices of fold ``j`` (1 or 2)."""
        return self.d1_star if j == 1 else self.d2_star

    def unlabeled_fold(self, j: int) -> np.ndarray:
        return self.u1 if j == 1 else self.u2

    def complement(self, j: int) -> np.ndarray:
        """Labeled indices outside fold ``j``, the training rows for the ``-j`` nuisance fit."""
        return self.d2_star if j == 1 else self.d1_star


def make_split(n: int, N: int, seed: int) -> SplitPlan:
    """Random two-fold split; the first fold gets the ceiling half."""
    if n < 2:
        raise InsufficientDataError(f"need n >= 2 labeled rows, got {n}")
    if N < 0:
        raise SchemaError("N must be nonnegative")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    h = math.ceil(n / 2)
    uperm = rng.permutation(N)
    hu = math.ceil(N / 2)
    return SplitPlan(
        np.sort(perm[:h]),
        np.sort(perm[h:]),
        np.sort(uperm[:hu]),
        np.sort(uperm[hu:]),
        seed=seed,
        n=n,
        N=N,
    )


@dataclass(frozen=True)
class ContrastVector:
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if v.size == 0 or not np.all(np.isfinite(v)) or np.linalg.norm(v) == 0:
            raise SchemaError("contrast vector must be finite and not all zero")
        object.__setattr__(self, "v", _frozen(v))

    @classmethod
    def basis(cls, p: int, index: int) -> "ContrastVector":
        """Unit vector e_index (0-based)."""
        if not 0 <= index < p:
            raise SchemaError(f"component index {index} out of range for p={p}")
        e = np.zeros(p)
        e[index] = 1.0
        return cls(e)

    @property
    def p(self) -> int:
        return self.v.size

    def l1_l2_ratio(self) -> float:
        return float(np.abs(self.v).sum() / np.linalg.norm(self.v))


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        rows = [r for r in reader if r]
    return [h.strip() for h in header], rows


def _to_matrix(path: Path, header: list[str], rows: list[list[str]]) -> np.ndarray:
    out = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {i + 2} has {len(row)} fields, header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                val = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric cell {cell!r} at row {i + 2}, column {header[j]!r}",
                    row=i + 2,
                    column=header[j],
                ) from None
            if not math.isfinite(val):
                raise ParseError(f"{path}: non-finite cell at row {i + 2}, column {header[j]!r}", i + 2, header[j])
            out[i, j] = val
    return out


def load_dataset(labeled_path, unlabeled_path=None, response_column: str = "y") -> SemiSupervisedDataset:
    """Read labeled (and optionally unlabeled) CSV files into a centered dataset.

    Row numbers in error messages are 1-based file lines (the header is line 1).
    """
    labeled_path = Path(labeled_path)
    header, rows = _read_csv(labeled_path)
    if response_column not in header:
        raise SchemaError(f"{labeled_path}: response column {response_column!r} not found")
    mat = _to_matrix(labeled_path, header, rows)
    yi = header.index(response_column)
    features = [h for h in header if h != response_column]
    lx = np.delete(mat, yi, axis=1)
    ly = mat[:, yi]
    ux = None
    if unlabeled_path is not None:
        unlabeled_path = Path(unlabeled_path)
        uheader, urows = _read_csv(unlabeled_path)
        if response_column in uheader:
            raise SchemaError(f"{unlabeled_path}: response column {response_column!r} must not appear in unlabeled file")
        if len(uheader) != len(features):
            raise SchemaError(
                f"{unlabeled_path}: {len(uheader)} covariate columns, labeled file has {len(features)}"
            )
        if uheader != features:
            raise SchemaError(f"{unlabeled_path}: covariate columns {uheader} differ from labeled {features}")
        ux = _to_matrix(unlabeled_path, uheader, urows)
    return SemiSupervisedDataset.from_arrays(lx, ly, ux, features)


def write_dataset_csv(ds_or_x, y, labeled_path, unlabeled_x=None, unlabeled_path=None, response_column="y", names=None):
    """Write raw arrays in the layout ``load_dataset`` expects."""
    x = np.asarray(ds_or_x, dtype=float)
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(x.shape[1])]
    with open(labeled_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([response_column, *names])
        for yi, row in zip(np.asarray(y, dtype=float), x):
            w.writerow([repr(float(yi)), *(repr(float(v)) for v in row)])
    if unlabeled_path is not None and unlabeled_x is not None:
        with open(unlabeled_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in np.asarray(unlabeled_x, dtype=float):
                w.writerow([repr(float(v)) for v in row])
