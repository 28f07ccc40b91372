import numpy as np
import pytest

from loorisk.core import Dataset, ModelSpec
from loorisk.oracle import CvPlan, cross_validate, cv_path, exact_loocv, kfold_cv, make_plan
from loorisk.solvers import SolverConfig, fit_model


def _data(n=30, p=5, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    return Dataset(x, x @ rng.standard_normal(p) + rng.standard_normal(n))


def test_loocv_plan():
    plan = make_plan(5)
    assert plan.k == 5 and all(len(f) == 1 for f in plan.folds)
    with pytest.raises(ValueError):
        make_plan(1)


def test_kfold_plan_partitions_and_is_seeded():
    a = make_plan(23, "kfold", 5, seed=4)
    b = make_plan(23, "kfold", 5, seed=4)
    c = make_plan(23, "kfold", 5, seed=5)
    assert all(np.array_equal(f, g) for f, g in zip(a.folds, b.folds))
    assert not all(np.array_equal(f, g) for f, g in zip(a.folds, c.folds))
    sizes = sorted(len(f) for f in a.folds)
    assert sizes == [4, 4, 5, 5, 5]
    with pytest.raises(ValueError):
        make_plan(10, "kfold", 11)
    with pytest.raises(ValueError):
        CvPlan("kfold", (np.array([0, 1]), np.array([1, 2])), 3, 2)


def test_loocv_matches_brute_force_ols():
    data = _data()
    spec = ModelSpec("squared", "ridge", 1e-9)
    res = exact_loocv(spec, data)
    brute = []
    for i in range(data.n):
        keep = np.arange(data.n) != i
        b = np.linalg.lstsq(data.x[keep], data.y[keep], rcond=None)[0]
        brute.append(data.x[i] @ b)
    np.testing.assert_allclose(res.predictions, brute, atol=1e-6)
    assert res.risk == pytest.approx(np.mean((data.y - np.array(brute)) ** 2), rel=1e-6)


def test_threads_do_not_change_results():
    data = _data()
    spec = ModelSpec("squared", "lasso", 0.5)
    a = kfold_cv(spec, data, 5, seed=1)
    b = kfold_cv(spec, data, 5, seed=1, n_jobs=4)
    np.testing.assert_array_equal(a.predictions, b.predictions)


def test_nonconverged_refits_are_flagged():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((20, 4))
    data = Dataset(x, np.where(x[:, 0] > 0, 1.0, -1.0), "binary")
    spec = ModelSpec("logistic", "lasso", 0.01)
    full = fit_model(spec, data)
    cfg = SolverConfig(max_iter=1, polish=False)
    with pytest.warns(RuntimeWarning):
        res = cross_validate(spec, data, make_plan(20, "kfold", 4), cfg, full_fit=full)
    assert res.flagged
    assert np.isnan(res.predictions[list(res.flagged)]).all()


def test_cv_path_lengths():
    data = _data()
    out = cv_path(ModelSpec("squared", "ridge", 1.0), data, [1.0, 0.1], make_plan(data.n, "kfold", 3))
    assert [r.lam for r in out] == [1.0, 0.1]
