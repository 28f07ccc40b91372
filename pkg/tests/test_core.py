import json

import numpy as np
import pytest

from loorisk.core import (
    AloReport,
    ConflictError,
    Dataset,
    DimensionError,
    InvalidTaskError,
    ModelSpec,
    ShapeError,
    UnsupportedEngineError,
    assemble_risk_curve,
    default_error_fn,
    error_values,
    eval_risk,
    read_dataset_csv,
    write_dataset_csv,
)
from loorisk.constraints import PositiveOrthant


def test_dataset_validation():
    x = np.ones((4, 3))
    with pytest.raises(DimensionError):
        Dataset(x, np.ones(5))
    with pytest.raises(InvalidTaskError):
        Dataset(x, np.array([0.0, 1, 1, 1]), kind="binary")
    with pytest.raises(ShapeError):
        Dataset(x, np.ones(4), matrix_shape=(2, 2))
    d = Dataset(x, np.ones(4))
    assert (d.n, d.p) == (4, 3)
    assert not d.x.flags.writeable


def test_subset_and_drop():
    x = np.arange(12.0).reshape(4, 3)
    d = Dataset(x, np.arange(4.0))
    np.testing.assert_array_equal(d.drop(1).y, [0, 2, 3])
    np.testing.assert_array_equal(d.subset([3, 0]).x, x[[3, 0]])


def test_error_functions():
    y = np.array([1.0, -1.0, 1.0])
    yhat = np.array([0.0, -2.0, -0.5])
    np.testing.assert_allclose(error_values(y, yhat), [1, 1, 2.25])
    np.testing.assert_allclose(error_values(y, yhat, "absolute"), [1, 1, 1.5])
    # sign(0) counts as +1
    np.testing.assert_allclose(error_values(y, yhat, "zero_one_sign"), [0, 0, 1])
    assert eval_risk([0, 0, 3], [1, 1, 0]) == pytest.approx(11 / 3)
    with pytest.raises(InvalidTaskError):
        error_values([0.0], [1.0], "zero_one_sign")
    with pytest.raises(ValueError):
        error_values([0.0], [1.0], "huber")
    with pytest.raises(DimensionError):
        eval_risk([], [])


def test_default_error_fn():
    assert default_error_fn(Dataset(np.ones((2, 1)), [1.0, -1.0], "binary")) == "zero_one_sign"
    assert default_error_fn(Dataset(np.ones((2, 1)), [1.0, 2.0])) == "squared"


def test_model_spec():
    s = ModelSpec("squared", "lasso", 0.5, intercept=True)
    assert s.describe()["regularizer"]["id"] == "lasso"
    assert s.with_lambda(2.0).lam == 2.0
    assert s.with_lambda(2.0).intercept
    with pytest.raises(ValueError):
        ModelSpec("squared", "lasso", 0.0)
    with pytest.raises(UnsupportedEngineError):
        ModelSpec("squared", "lasso", 1.0, PositiveOrthant())


def test_risk_curve_assembly():
    entries = [
        (0.1, "alo", 1.0, 0.01, ""),
        (1.0, "alo", 2.0, 0.01, ""),
        (1.0, "loocv", 2.5, 0.5, "slow"),
    ]
    c = assemble_risk_curve(entries)
    np.testing.assert_array_equal(c.lambdas, [1.0, 0.1])
    assert np.isnan(c.risks["loocv"][1])
    assert c.argmin("alo") == 0.1
    lines = c.to_csv().splitlines()
    assert lines[0] == "lambda,method,risk,seconds,warnings"
    assert len(lines) == 4 and lines[-1].endswith("slow")
    with pytest.raises(ConflictError):
        assemble_risk_curve(entries + [(0.1, "alo", 3.0, 0.0)])


def test_argmin_ties_prefer_largest_lambda():
    c = assemble_risk_curve([(1.0, "m", 1.0, 0), (0.5, "m", 1.0, 0), (0.1, "m", 2.0, 0)])
    assert c.argmin("m") == 1.0


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    d = Dataset(rng.standard_normal((5, 3)), rng.standard_normal(5))
    path = tmp_path / "d.csv"
    write_dataset_csv(d, path)
    back = read_dataset_csv(path)
    np.testing.assert_array_equal(back.x, d.x)
    np.testing.assert_array_equal(back.y, d.y)
    named = read_dataset_csv(path, target="x0")
    np.testing.assert_array_equal(named.y, d.x[:, 0])
    write_dataset_csv(d, path, header=False)
    with pytest.raises(ValueError):
        read_dataset_csv(path, target="y")


def test_csv_infers_binary(tmp_path):
    path = tmp_path / "b.csv"
    path.write_text("1.0,1\n2.0,-1\n")
    assert read_dataset_csv(path).kind == "binary"


def test_alo_report_serialization():
    rep = AloReport(
        predictions=np.array([1.0, np.nan]),
        hat_diag=np.array([0.2, 1.0]),
        risk=0.5,
        active_set_size=1,
        engine="dual",
        flagged=(1,),
    )
    payload = json.loads(rep.to_json())
    assert payload["predictions"][1] is None
    assert payload["flagged"] == [1]
    rows = rep.to_csv(np.array([1.0, 2.0])).splitlines()
    assert len(rows) == 3
