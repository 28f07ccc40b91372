import numpy as np
import pytest

from loorisk.constraints import (
    Polyhedron,
    PositiveOrthant,
    PSDCone,
    polyhedron_jacobian,
    psd_jacobian,
    psd_projection,
    symmetrizer,
)
from loorisk.core import DegeneratePointError, DegenerateSpectrumError, ShapeError


def _fd_jacobian(f, v, h=1e-6):
    return np.column_stack([(f(v + h * e) - f(v - h * e)) / (2 * h) for e in np.eye(v.size)])


def test_orthant_projection_and_face():
    op = PositiveOrthant()
    v = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(op.project(v), [1.0, 0.0, 0.5])
    J, gamma = polyhedron_jacobian(op, v)
    assert gamma.shape == (3, 2)
    np.testing.assert_array_equal(np.diag(J), [1, 0, 1])
    with pytest.raises(DegeneratePointError):
        op.face(np.array([1.0, 0.0]))


def test_orthant_jacobian_finite_difference():
    op = PositiveOrthant()
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.standard_normal(8)
        np.testing.assert_allclose(op.jacobian(v), _fd_jacobian(op.project, v), atol=1e-6)


def test_psd_projection_properties():
    rng = np.random.default_rng(1)
    B = rng.standard_normal((4, 4))
    P = psd_projection(None, B)
    assert np.linalg.eigvalsh(P).min() >= -1e-12
    np.testing.assert_allclose(P, P.T)
    np.testing.assert_allclose(psd_projection(None, P), P, atol=1e-12)
    # the residual of the symmetric part is orthogonal to the projection
    S = 0.5 * (B + B.T)
    assert abs(np.sum((S - P) * P)) < 1e-10


@pytest.mark.parametrize("p", [2, 3, 4])
def test_psd_jacobian_finite_difference(p):
    op = PSDCone(p)
    rng = np.random.default_rng(p)
    for _ in range(50):
        v = rng.standard_normal(p * p)
        np.testing.assert_allclose(op.jacobian(v), _fd_jacobian(op.project, v), atol=1e-4)


def test_psd_jacobian_rejects_zero_eigenvalue():
    with pytest.raises(DegenerateSpectrumError):
        psd_jacobian(None, np.diag([1.0, 0.0]))


def test_psd_shape_check():
    with pytest.raises(ShapeError):
        PSDCone(3).project(np.ones(8))


def test_symmetrizer():
    B = np.arange(9.0).reshape(3, 3)
    np.testing.assert_allclose(symmetrizer(3) @ B.ravel(), (0.5 * (B + B.T)).ravel())


def test_user_polyhedron_box():
    # box [0, 1]^p via a user-supplied projection and face oracle
    def project(v):
        return np.clip(v, 0.0, 1.0)

    def face(v):
        if np.any(np.isclose(v, 0.0, atol=1e-8) | np.isclose(v, 1.0, atol=1e-8)):
            raise DegeneratePointError("on a box face boundary")
        return np.eye(v.size)[:, (v > 0) & (v < 1)]

    op = Polyhedron(project, face)
    rng = np.random.default_rng(2)
    for _ in range(20):
        v = rng.uniform(-1, 2, 6)
        np.testing.assert_allclose(op.jacobian(v), _fd_jacobian(op.project, v), atol=1e-6)
