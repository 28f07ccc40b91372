import numpy as np
import pytest

from loorisk.datagen import SCENARIOS, GenConfig, generate, toeplitz_cov


def _cfg(scenario, **kw):
    if scenario == "lowrank_matrix":
        kw.setdefault("p1", 3)
        kw.setdefault("p2", 4)
        kw.setdefault("k", 1)
    if scenario == "psd_quadratic":
        kw.setdefault("p", 3)
    return GenConfig(scenario, n=kw.pop("n", 30), **kw)


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_same_seed_same_bytes(scenario):
    a, ta = generate(_cfg(scenario, seed=3))
    b, tb = generate(_cfg(scenario, seed=3))
    c, _ = generate(_cfg(scenario, seed=4))
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()
    np.testing.assert_array_equal(ta["beta"], tb["beta"])
    assert a.x.tobytes() != c.x.tobytes()


def test_shapes_and_kinds():
    d, t = generate(_cfg("lowrank_matrix"))
    assert d.matrix_shape == (3, 4) and np.linalg.matrix_rank(t["beta"].reshape(3, 4)) == 1
    d, t = generate(_cfg("psd_quadratic"))
    B = t["beta"].reshape(3, 3)
    np.testing.assert_allclose(B, B.T)
    d, _ = generate(_cfg("logistic_binary"))
    assert d.kind == "binary"
    d, t = generate(_cfg("iid_gauss_linear", p=20, k=4))
    assert np.count_nonzero(t["beta"]) == 4
    assert np.all(np.abs(t["beta"]) <= 3)


def test_piecewise_truth_has_k_jumps():
    _, t = generate(_cfg("piecewise_constant_fused", p=30, k=3))
    assert np.count_nonzero(np.abs(np.diff(t["beta"])) > 1e-12) <= 3


def test_iid_design_scale():
    d, _ = generate(GenConfig("iid_gauss_linear", n=400, p=50, k=5))
    assert np.var(d.x) == pytest.approx(1 / 400, rel=0.05)
    d, _ = generate(GenConfig("iid_gauss_linear", n=400, p=50, k=5, design_var="1"))
    assert np.var(d.x) == pytest.approx(1.0, rel=0.05)


def test_toeplitz():
    C = toeplitz_cov(4, 0.5)
    assert C[0, 3] == 0.125 and C[2, 2] == 1.0


def test_noise_level_matches_config():
    d, t = generate(GenConfig("iid_gauss_linear", n=4000, p=5, k=2, noise_sd=0.3))
    resid = d.y - d.x @ t["beta"]
    assert resid.std() == pytest.approx(0.3, rel=0.05)


def test_heavy_tail_variance_rescaled():
    d, t = generate(GenConfig("heavy_tail_t3", n=20000, p=3, k=1, noise_sd=1.0))
    assert (d.y - d.x @ t["beta"]).std() == pytest.approx(1.0, rel=0.1)


@pytest.mark.parametrize(
    "kw",
    [
        dict(scenario="nope"),
        dict(n=0),
        dict(rho=1.0),
        dict(k=50),
        dict(scenario="lowrank_matrix"),
        dict(design_var="2"),
        dict(noise_sd=-1.0),
    ],
)
def test_invalid_configs(kw):
    with pytest.raises(ValueError):
        GenConfig(**kw)
