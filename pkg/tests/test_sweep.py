import numpy as np
import pytest

from loorisk.core import ModelSpec
from loorisk.datagen import GenConfig, generate
from loorisk.oracle import exact_loocv
from loorisk.solvers import fit_model
from loorisk.sweep import bench, lambda_grid, parse_methods, risk_sweep


def test_lambda_grid():
    g = lambda_grid(25, 3.16e-3, 3.16e-2)
    assert g.size == 25 and g[0] == pytest.approx(3.16e-2) and g[-1] == pytest.approx(3.16e-3)
    assert np.all(np.diff(g) < 0)
    np.testing.assert_allclose(np.diff(np.log(g)), np.diff(np.log(g))[0])
    np.testing.assert_allclose(lambda_grid(3, 1, 3, log=False), [3, 2, 1])
    with pytest.raises(ValueError):
        lambda_grid(0, 1, 2)
    with pytest.raises(ValueError):
        lambda_grid(3, 2, 1)


def test_parse_methods():
    assert parse_methods("alo, loocv,kfold5") == ["alo", "loocv", "kfold5"]
    with pytest.raises(ValueError):
        parse_methods("alo,gcv")
    with pytest.raises(ValueError):
        parse_methods("")


def test_sweep_rows_align_and_match_direct_calls():
    data, _ = generate(GenConfig("iid_gauss_linear", n=40, p=10, k=3))
    spec = ModelSpec("squared", "lasso", 1.0)
    lams = lambda_grid(4, 0.05, 1.0)
    res = risk_sweep(spec, data, lams, "alo,loocv,kfold5")
    assert set(res.curve.methods) == {"alo", "loocv", "kfold5"}
    for m in res.curve.methods:
        assert np.all(np.isfinite(res.curve.risks[m]))
    lam = lams[2]
    fit = fit_model(spec.with_lambda(lam), data)
    loo = exact_loocv(spec.with_lambda(lam), data, full_fit=fit)
    assert res.curve.risks["loocv"][2] == pytest.approx(loo.risk, rel=1e-8)
    assert res.reports[2].lam == lam


def test_sweep_is_deterministic_with_threads():
    data, _ = generate(GenConfig("iid_gauss_linear", n=30, p=8, k=3))
    spec = ModelSpec("squared", "lasso", 1.0)
    lams = lambda_grid(3, 0.05, 1.0)
    a = risk_sweep(spec, data, lams, "alo,kfold3")
    b = risk_sweep(spec, data, lams, "alo,kfold3", n_jobs=3)
    for m in ("alo", "kfold3"):
        np.testing.assert_array_equal(a.curve.risks[m], b.curve.risks[m])


def test_bench_rows():
    datasets = [generate(GenConfig("iid_gauss_linear", n=30, p=10, k=3, seed=s))[0] for s in range(2)]
    rows = bench(ModelSpec("squared", "lasso", 1.0), datasets, lambda_grid(3, 0.05, 1.0))
    assert [r.stage for r in rows] == ["single_fit", "alo", "loocv"]
    assert all(r.repeats == 2 and r.sd_s is not None for r in rows)
    one = bench(ModelSpec("squared", "lasso", 1.0), datasets[:1], lambda_grid(3, 0.05, 1.0))
    assert all(r.sd_s is None for r in one)


def test_bench_budget_gives_lower_bound_note():
    data = generate(GenConfig("iid_gauss_linear", n=60, p=20, k=3))[0]
    rows = bench(ModelSpec("squared", "lasso", 1.0), [data], lambda_grid(5, 0.01, 1.0), loocv_budget_factor=1.0)
    assert "lower bound" in rows[2].note
