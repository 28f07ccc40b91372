import cvxpy as cp
import numpy as np
import pytest

from loorisk.core import DegeneratePointError, DegenerateSpectrumError
from loorisk.regularizers import (
    FrobeniusSquared,
    GeneralizedLasso,
    GroupLasso,
    LInf,
    Lasso,
    Nuclear,
    Ridge,
    Slope,
    first_difference,
    get_regularizer,
    load_triplets,
    project_l1_ball,
    prox,
    prox_jacobian,
    soft_threshold,
    sorted_l1_prox,
    spectral_hessian,
)

P = 12
GROUPS = [0, 0, 0, 1, 1, 2, 2, 2, 2, 3, 4, 4]
SLOPE_W = np.linspace(2.0, 0.5, P)


def all_regularizers():
    return {
        "ridge": Ridge(),
        "lasso": Lasso(),
        "group_lasso": GroupLasso(GROUPS, weights=[1.0, 2.0, 0.5, 1.0, 1.5]),
        "gen_lasso": GeneralizedLasso(first_difference(P)),
        "slope": Slope(SLOPE_W),
        "linf": LInf(),
        "nuclear": Nuclear((3, 4)),
        "frob_sq": FrobeniusSquared((3, 4)),
    }


@pytest.mark.parametrize("name", list(all_regularizers()))
def test_prox_nonexpansive(name):
    reg = all_regularizers()[name]
    rng = np.random.default_rng(list(all_regularizers()).index(name))
    for _ in range(200):
        a, b = rng.standard_normal(P) * 2, rng.standard_normal(P) * 2
        t = rng.uniform(0.1, 2.0)
        lhs = np.linalg.norm(prox(reg, a, t) - prox(reg, b, t))
        assert lhs <= np.linalg.norm(a - b) * (1 + 1e-7) + 1e-9


def _cvx_penalty(name, x):
    if name == "group_lasso":
        reg = all_regularizers()[name]
        return sum(w * cp.norm(x[g], 2) for g, w in zip(reg.groups, reg.weights))
    if name == "gen_lasso":
        return cp.norm1(first_difference(P) @ x)
    if name == "slope":
        # sorted-l1 as a positive combination of top-k sums
        dw = np.append(-np.diff(SLOPE_W), SLOPE_W[-1])
        return sum(dw[k] * cp.sum_largest(cp.abs(x), k + 1) for k in range(P))
    if name == "linf":
        return cp.norm_inf(x)
    if name == "nuclear":
        return cp.normNuc(cp.reshape(x, (3, 4), order="C"))
    raise KeyError(name)


@pytest.mark.parametrize("name", ["group_lasso", "gen_lasso", "slope", "linf", "nuclear"])
def test_prox_matches_convex_solver(name):
    reg = all_regularizers()[name]
    rng = np.random.default_rng(3)
    for _ in range(3):
        z = rng.standard_normal(P) * 2
        t = 0.7
        x = cp.Variable(P)
        cp.Problem(cp.Minimize(0.5 * cp.sum_squares(x - z) + t * _cvx_penalty(name, x))).solve(
            solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10
        )
        np.testing.assert_allclose(prox(reg, z, t), x.value, atol=1e-5)


def test_prox_scaling_by_tau_and_lambda():
    z = np.array([3.0, -0.2, 1.0])
    np.testing.assert_allclose(prox(Lasso(), z, tau=0.5, lam=2.0), soft_threshold(z, 1.0))
    with pytest.raises(ValueError):
        prox(Lasso(), z, tau=0.0)


def test_soft_threshold_and_slope_with_equal_weights():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(20)
    np.testing.assert_allclose(soft_threshold(z, 0.4), np.sign(z) * np.maximum(np.abs(z) - 0.4, 0))
    np.testing.assert_allclose(sorted_l1_prox(z, np.full(20, 0.4)), soft_threshold(z, 0.4), atol=1e-14)


def test_l1_ball_projection():
    rng = np.random.default_rng(1)
    v = rng.standard_normal(15) * 3
    w = project_l1_ball(v, 2.0)
    assert np.abs(w).sum() == pytest.approx(2.0)
    inside = v / np.abs(v).sum()
    np.testing.assert_allclose(project_l1_ball(inside, 2.0), inside)


@pytest.mark.parametrize("name", ["ridge", "lasso", "group_lasso"])
def test_prox_jacobian_finite_difference(name):
    reg = all_regularizers()[name]
    rng = np.random.default_rng(5)
    t, h = 0.6, 1e-7
    for _ in range(20):
        z = rng.standard_normal(P) * 2
        try:
            jac = prox_jacobian(reg, z, lam=1.0, tau=t)
        except DegeneratePointError:
            continue
        fd = np.column_stack(
            [(prox(reg, z + h * e, t) - prox(reg, z - h * e, t)) / (2 * h) for e in np.eye(P)]
        )
        np.testing.assert_allclose(jac, fd, atol=1e-5)


def test_jacobian_refuses_kink():
    with pytest.raises(DegeneratePointError):
        prox_jacobian(Lasso(), np.array([1.0, 0.3]), lam=1.0)


def _spectral_grad(B, fprime):
    u, s, vt = np.linalg.svd(B, full_matrices=False)
    return (u * fprime(s)) @ vt


@pytest.mark.parametrize(
    "f1,f2",
    [
        (lambda s: 2 * s, lambda s: 2 * np.ones_like(s)),
        (lambda s: np.log1p(s) + s / (1 + s), lambda s: 1 / (1 + s) + 1 / (1 + s) ** 2),
        (lambda s: 3 * s**2, lambda s: 6 * s),
    ],
)
@pytest.mark.parametrize("shape", [(3, 3), (4, 3), (3, 5)])
def test_spectral_hessian_finite_difference(f1, f2, shape):
    rng = np.random.default_rng(7)
    B = rng.standard_normal(shape)
    hess = spectral_hessian(B, f1, f2)
    h = 1e-6
    fd = np.column_stack(
        [
            ((_spectral_grad(B + h * e.reshape(shape), f1) - _spectral_grad(B - h * e.reshape(shape), f1)) / (2 * h)).ravel()
            for e in np.eye(B.size)
        ]
    )
    np.testing.assert_allclose(hess, fd, atol=1e-4)


def test_frobenius_spectral_hessian_is_twice_identity():
    B = np.random.default_rng(2).standard_normal((3, 4))
    np.testing.assert_allclose(FrobeniusSquared((3, 4)).spectral_hessian(B.ravel()), 2 * np.eye(12), atol=1e-12)


def test_spectral_hessian_rejects_repeated_values():
    with pytest.raises(DegenerateSpectrumError):
        spectral_hessian(np.eye(3), lambda s: s, lambda s: np.ones_like(s))


def test_dual_norms():
    v = np.array([3.0, -1.0, 2.0])
    assert Lasso().dual_norm(v) == 3.0
    assert LInf().dual_norm(v) == 6.0
    # slope with equal weights reduces to the lasso
    assert Slope(np.ones(3)).dual_norm(v) == pytest.approx(3.0)


def test_constructor_validation():
    with pytest.raises(ValueError):
        GroupLasso([[0, 1], [1, 2]])
    with pytest.raises(ValueError):
        Slope([1.0, 2.0])
    with pytest.raises(ValueError):
        get_regularizer("elastic")


def test_first_difference_and_triplets(tmp_path):
    D = first_difference(4)
    np.testing.assert_array_equal(D @ np.array([1.0, 1, 3, 3]), [0, 2, 0])
    path = tmp_path / "d.csv"
    path.write_text("row,col,value\n0,0,-1\n0,1,1\n1,1,-1\n1,2,1\n")
    np.testing.assert_array_equal(load_triplets(path).toarray(), first_difference(3))
