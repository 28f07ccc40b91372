"""Convex sets with Euclidean projections and projection Jacobians.

Shipped sets are the positive orthant, a generic polyhedron described by a
user supplied projection and face oracle, and the cone of positive
semidefinite matrices (coefficients reshaped row-major to ``p x p``).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .core import DegeneratePointError, DegenerateSpectrumError, ShapeError

__all__ = [
    "ProjectionOp",
    "PositiveOrthant",
    "Polyhedron",
    "PSDCone",
    "polyhedron_jacobian",
    "psd_projection",
    "psd_jacobian",
    "symmetrizer",
]

BOUNDARY_MARGIN = 1e-8


class ProjectionOp:
    id: str = ""
    polyhedral: bool = False

    def project(self, v) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, v) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class PositiveOrthant(ProjectionOp):
    """``{beta : beta_j >= 0}``."""

    id = "positive_orthant"
    polyhedral = True

    def project(self, v):
        return np.maximum(np.asarray(v, dtype=float), 0.0)

    def face(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        near = np.abs(v) <= BOUNDARY_MARGIN
        if near.any():
            raise DegeneratePointError(
                f"coordinate {int(np.flatnonzero(near)[0])} is on the orthant boundary"
            )
        return np.eye(v.size)[:, v > 0]

    def jacobian(self, v):
        gamma = self.face(v)
        return gamma @ gamma.T


class Polyhedron(ProjectionOp):
    """Polyhedron given by its projection and a face oracle.

    Parameters
    ----------
    project : callable
        ``v -> proj_C(v)``.
    face : callable
        ``v -> Gamma``, orthonormal columns spanning the face of ``C`` that
        contains ``proj_C(v)`` (in the sense of the normal-cone
        decomposition), raising :class:`DegeneratePointError` near kinks.
    """

    id = "polyhedron"
    polyhedral = True

    def __init__(self, project: Callable, face: Callable):
        self._project = project
        self._face = face

    def project(self, v):
        return np.asarray(self._project(np.asarray(v, dtype=float)), dtype=float)

    def face(self, v):
        return np.asarray(self._face(np.asarray(v, dtype=float)), dtype=float)

    def jacobian(self, v):
        gamma = self.face(v)
        return gamma @ gamma.T


def symmetrizer(p: int) -> np.ndarray:
    """Matrix of ``vec(B) -> vec((B + B')/2)`` (row-major vec)."""
    eye = np.eye(p * p)
    perm = np.arange(p * p).reshape(p, p).T.ravel()
    return 0.5 * (eye + eye[perm])


class PSDCone(ProjectionOp):
    """Positive semidefinite ``p x p`` matrices, flattened row-major."""

    id = "psd_cone"

    def __init__(self, p: int):
        self.p = int(p)

    def _as_matrix(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape == (self.p, self.p):
            return v
        if v.size != self.p * self.p:
            raise ShapeError(f"expected {self.p * self.p} entries, got {v.size}")
        return v.reshape(self.p, self.p)

    def project(self, v):
        return psd_projection(self, self._as_matrix(v)).ravel()

    def jacobian(self, v):
        return psd_jacobian(self, self._as_matrix(v))

    def __repr__(self):
        return f"PSDCone(p={self.p})"


def polyhedron_jacobian(op: ProjectionOp, v) -> tuple[np.ndarray, np.ndarray]:
    """``(J, Gamma)`` with ``J = Gamma Gamma'`` the projection Jacobian at ``v``."""
    if not op.polyhedral:
        raise ValueError(f"{op.id} is not a polyhedron")
    gamma = op.face(v)
    return gamma @ gamma.T, gamma


def psd_projection(op: ProjectionOp | None, B) -> np.ndarray:
    """Nearest PSD matrix to the symmetric part of ``B``."""
    B = np.asarray(B, dtype=float)
    S = 0.5 * (B + B.T)
    w, q = np.linalg.eigh(S)
    out = (q * np.maximum(w, 0.0)) @ q.T
    return 0.5 * (out + out.T)


def psd_jacobian(op: ProjectionOp | None, B) -> np.ndarray:
    """Jacobian (``p^2 x p^2``, row-major vec) of :func:`psd_projection` at ``B``.

    The map factors as symmetrization followed by the projection of a
    symmetric matrix; in the eigenbasis ``q_i`` of the symmetric part the
    second factor is diagonal with weight ``1[lam_i > 0]`` on
    ``vec(q_i q_i')`` and ``((lam_i)_+ - (lam_j)_+) / (lam_i - lam_j)`` on
    ``vec(q_i q_j' + q_j q_i') / sqrt(2)``.
    """
    B = np.asarray(B, dtype=float)
    p = B.shape[0]
    S = 0.5 * (B + B.T)
    w, q = np.linalg.eigh(S)
    if np.any(np.abs(w) <= BOUNDARY_MARGIN):
        raise DegenerateSpectrumError("eigenvalue too close to zero for a Jacobian")
    cols, weights = [], []
    for i in range(p):
        cols.append(np.outer(q[:, i], q[:, i]).ravel())
        weights.append(1.0 if w[i] > 0 else 0.0)
    pos = np.maximum(w, 0.0)
    for i in range(p):
        for j in range(i + 1, p):
            m = np.outer(q[:, i], q[:, j])
            cols.append(((m + m.T) / np.sqrt(2.0)).ravel())
            if abs(w[i] - w[j]) <= BOUNDARY_MARGIN:
                # equal eigenvalues of the same sign: derivative is 0 or 1
                weights.append(1.0 if w[i] > 0 else 0.0)
            else:
                weights.append((pos[i] - pos[j]) / (w[i] - w[j]))
    Q = np.column_stack(cols)
    J1 = (Q * np.asarray(weights)) @ Q.T
    J = J1 @ symmetrizer(p)
    return 0.5 * (J + J.T)
