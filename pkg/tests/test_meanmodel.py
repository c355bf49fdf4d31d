import numpy as np
import pytest

from sslinfer.core import SemiSupervisedDataset, make_split
from sslinfer.errors import InsufficientDataError, SchemaError
from sslinfer.meanmodel import (
    FixedTrainer,
    FunctionSurrogate,
    constant_surrogate,
    crossfit_surrogates,
    evaluate,
    fit_sparse_additive,
)
from sslinfer.solvers import tune_by_bic


def test_null_response(rng):
    x = rng.normal(size=(50, 3))
    fit = fit_sparse_additive(x, np.zeros(50))
    assert fit.intercept == 0.0
    assert all(not np.any(c) for c in fit.block_coefs)
    assert fit.active_set.size == 0
    assert not np.any(evaluate(fit, rng.normal(size=(7, 3))))


def test_linear_signal_selected_and_predicts(rng):
    n = 400
    x = rng.normal(size=(n, 6))
    y = 2 * x[:, 0] + 0.3 * rng.normal(size=n)
    fit = fit_sparse_additive(x, y)
    assert 0 in fit.active_set
    xt = rng.normal(size=(2000, 6))
    yt = 2 * xt[:, 0] + 0.3 * rng.normal(size=2000)
    assert np.mean((fit.evaluate(xt) - yt) ** 2) < 0.05 * np.var(yt)


def test_quadratic_curve(rng):
    n = 600
    x = rng.uniform(-2, 2, size=(n, 1))
    y = x[:, 0] ** 2 + 0.05 * rng.normal(size=n)
    fit = fit_sparse_additive(x, y, df=5)
    q = np.quantile(x[:, 0], [0.1, 0.25, 0.5, 0.75, 0.9])
    assert np.abs(fit.evaluate(q[:, None]) - q**2).max() < 0.1


def test_training_rows_reproduce_fitted(rng):
    x = rng.normal(size=(120, 4))
    y = np.sin(x[:, 1]) + 0.1 * rng.normal(size=120)
    fit = fit_sparse_additive(x, y)
    assert np.abs(fit.evaluate(x) - fit.fitted_values).max() < 1e-8


def test_linearity_in_coefficients(rng):
    x = rng.normal(size=(120, 4))
    y = x[:, 0] ** 2 + x[:, 2] + 0.1 * rng.normal(size=120)
    fit = fit_sparse_additive(x, y)
    xt = rng.normal(size=(30, 4))
    doubled = fit.scaled(2.0)
    np.testing.assert_allclose(doubled.evaluate(xt), 2 * (fit.evaluate(xt) - fit.intercept) + fit.intercept, atol=1e-12)


def test_active_set_definition(rng):
    x = rng.normal(size=(150, 5))
    y = x[:, 3] ** 2 + 0.1 * rng.normal(size=150)
    fit = fit_sparse_additive(x, y)
    expect = [j for j, c in enumerate(fit.block_coefs) if np.linalg.norm(c) > 0]
    assert fit.active_set.tolist() == expect


def test_constant_column_dropped_with_warning(rng):
    x = rng.normal(size=(80, 3))
    x[:, 1] = 4.0
    y = x[:, 0] + 0.1 * rng.normal(size=80)
    fit = fit_sparse_additive(x, y)
    assert fit.bases[1] is None and fit.warnings
    assert np.isfinite(fit.evaluate(rng.normal(size=(5, 3)))).all()


def test_out_of_range_extends_boundary_cubic(rng):
    x = rng.uniform(-1, 1, size=(400, 1))
    y = x[:, 0] ** 3 + 0.01 * rng.normal(size=400)
    fit = fit_sparse_additive(x, y)
    hi = x.max()
    edge = fit.evaluate(np.array([[hi], [hi + 1e-9]]))
    assert abs(edge[1] - edge[0]) < 1e-6
    # a cubic lies in the spline space, so the end piece continues it
    assert fit.evaluate(np.array([[1.5]]))[0] == pytest.approx(3.375, abs=0.15)
    assert fit.evaluate(np.array([[-1.5]]))[0] == pytest.approx(-3.375, abs=0.15)


def test_shape_mismatch(rng):
    fit = fit_sparse_additive(rng.normal(size=(40, 2)), rng.normal(size=40))
    with pytest.raises(SchemaError):
        fit.evaluate(np.zeros((3, 3)))


def test_needs_enough_rows(rng):
    with pytest.raises(InsufficientDataError):
        fit_sparse_additive(rng.normal(size=(6, 2)), rng.normal(size=6))


def test_bic_choice_reproducible(rng):
    x = rng.normal(size=(100, 3))
    y = x[:, 0] ** 2 + 0.2 * rng.normal(size=100)
    a = fit_sparse_additive(x, y)
    b = fit_sparse_additive(x, y)
    assert a.lam == b.lam
    assert all(p.tobytes() == q.tobytes() for p, q in zip(a.block_coefs, b.block_coefs))
    blocks = [bs.expand(x[:, j]) for j, bs in enumerate(a.bases)]
    again = tune_by_bic(blocks, y, a.bic_grid)
    assert again.chosen_lambda == a.lam


def test_crossfit_trainer_sees_only_complement(rng):
    ds = SemiSupervisedDataset.from_arrays(rng.normal(size=(11, 2)), rng.normal(size=11), rng.normal(size=(4, 2)))
    split = make_split(11, 4, 0)
    seen = []

    def trainer(x, y, seed):
        seen.append(x.copy())
        return constant_surrogate(float(y.mean()))

    crossfit_surrogates(ds, split, trainer)
    np.testing.assert_array_equal(seen[0], ds.labeled_x[split.d2_star])
    np.testing.assert_array_equal(seen[1], ds.labeled_x[split.d1_star])


def test_function_and_fixed_surrogates():
    f = FunctionSurrogate(lambda x: x[:, 0] * 2)
    assert FixedTrainer(f)(None, None, 0) is f
    np.testing.assert_array_equal(f.evaluate(np.array([[1.0, 0.0], [2.0, 0.0]])), [2.0, 4.0])
