"""Regularizers: values, proximal maps, Jacobians, Hessians and active sets.

A regularizer object describes ``R`` without the penalty level; every
operation that needs the level takes it explicitly.  ``reg.prox(z, t)``
computes ``prox_{t R}(z)``, so the proximal map of ``lam * R`` with step
``tau`` is ``reg.prox(z, tau * lam)`` (the :func:`prox` wrapper does that).

Parameterizations
-----------------
ridge        ``||b||^2``
lasso        ``||b||_1``
group_lasso  ``sum_l w_l ||b_{I_l}||_2``
gen_lasso    ``||D b||_1``
slope        ``sum_i w_i |b|_(i)`` with ``w`` nonincreasing
linf         ``max_i |b_i|``
nuclear      ``sum_s sigma_s(B)`` for ``B`` reshaped row-major to ``(p1, p2)``
frob_sq      ``||B||_F^2``
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .core import (
    ConditioningError,
    Dataset,
    DegeneratePointError,
    DegenerateSpectrumError,
    FitResult,
    ShapeError,
    StaleFitError,
)

__all__ = [
    "Regularizer",
    "Ridge",
    "Lasso",
    "GroupLasso",
    "GeneralizedLasso",
    "Slope",
    "LInf",
    "Nuclear",
    "FrobeniusSquared",
    "ActiveSetInfo",
    "get_regularizer",
    "first_difference",
    "load_triplets",
    "prox",
    "prox_jacobian",
    "reg_hessian",
    "active_set",
    "soft_threshold",
    "project_l1_ball",
    "sorted_l1_prox",
    "spectral_hessian",
    "nuclear_rotation",
    "orthonormal_basis",
    "null_space_qr",
]

BOUNDARY_MARGIN = 1e-8
SUPPORT_TOL = 1e-8
NUCLEAR_TOL = 1e-3


# ---------------------------------------------------------------------------
# elementary maps
# ---------------------------------------------------------------------------


def soft_threshold(z, t):
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def project_l1_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{x : ||x||_1 <= radius}`` (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    if radius <= 0:
        return np.zeros_like(v)
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, u.size + 1)
    rho = np.nonzero(u - (css - radius) / j > 0)[0][-1]
    shift = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - shift, 0.0)


def sorted_l1_prox(z, weights) -> np.ndarray:
    """``argmin_x 0.5 ||x - z||^2 + sum_i weights_i |x|_(i)``.

    ``weights`` must be nonincreasing and nonnegative.  Uses a stack-based
    pool-adjacent-violators pass on ``|z|`` sorted in decreasing order.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(-np.abs(z), kind="stable")
    v = np.abs(z)[order] - w
    # blocks as (start, end, total)
    starts: list[int] = []
    ends: list[int] = []
    sums: list[float] = []
    for i, vi in enumerate(v):
        starts.append(i)
        ends.append(i)
        sums.append(float(vi))
        while len(sums) > 1:
            n_last = ends[-1] - starts[-1] + 1
            n_prev = ends[-2] - starts[-2] + 1
            if sums[-2] / n_prev > sums[-1] / n_last:
                break
            s, e = sums.pop(), ends.pop()
            starts.pop()
            sums[-1] += s
            ends[-1] = e
    x_sorted = np.empty_like(v)
    for s, e, tot in zip(starts, ends, sums):
        x_sorted[s : e + 1] = max(tot / (e - s + 1), 0.0)
    x = np.empty_like(z)
    x[order] = x_sorted
    return np.sign(z) * x


def orthonormal_basis(a: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ``range(a)`` from an SVD with relative cutoff."""
    if a.shape[1] == 0:
        return np.zeros((a.shape[0], 0))
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((a.shape[0], 0))
    return u[:, s > rtol * s[0]]


def null_space_qr(a: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ``null(a)`` from a column-pivoted QR of ``a'``."""
    m, p = a.shape
    if m == 0:
        return np.eye(p)
    q, r, _ = sla.qr(a.T, mode="full", pivoting=True)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > rtol * d[0])) if d.size and d[0] > 0 else 0
    return q[:, rank:]


def _column_rank(a: np.ndarray, rtol: float = 1e-10) -> int:
    if a.shape[1] == 0:
        return 0
    _, r, _ = sla.qr(a, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    return int(np.sum(d > rtol * d[0])) if d.size and d[0] > 0 else 0


# ---------------------------------------------------------------------------
# regularizer classes
# ---------------------------------------------------------------------------


class Regularizer:
    """Base class; see the module docstring for the parameterizations."""

    id: str = ""
    smooth_hessian = False
    separable_prox = False
    dual_face = False
    spectral = False
    has_jacobian = False

    def value(self, beta) -> float:
        raise NotImplementedError

    def grad(self, beta) -> np.ndarray:
        raise NotImplementedError(f"{self.id} is not differentiable")

    def hessian(self, beta) -> np.ndarray:
        raise NotImplementedError(f"{self.id} has no Hessian")

    def prox(self, z, t: float) -> np.ndarray:
        raise NotImplementedError(f"{self.id} has no proximal map")

    def jacobian(self, z, t: float) -> np.ndarray:
        raise NotImplementedError(f"{self.id} has no proximal Jacobian")

    def dual_norm(self, v) -> float:
        raise NotImplementedError

    def conjugate(self, v, lam: float) -> float:
        """``(lam R)^*(v)``: zero or infinity for norms."""
        return 0.0 if self.dual_norm(v) <= lam * (1 + 1e-9) else np.inf

    def describe(self) -> dict:
        return {"id": self.id}

    def __repr__(self):
        return f"{type(self).__name__}()"


class Ridge(Regularizer):
    id = "ridge"
    smooth_hessian = True
    separable_prox = True
    has_jacobian = True

    def value(self, beta):
        beta = np.asarray(beta, dtype=float)
        return float(beta @ beta)

    def grad(self, beta):
        return 2.0 * np.asarray(beta, dtype=float)

    def hessian(self, beta):
        return 2.0 * np.eye(np.size(beta))

    def prox(self, z, t):
        return np.asarray(z, dtype=float) / (1.0 + 2.0 * t)

    def jacobian(self, z, t):
        return np.eye(np.size(z)) / (1.0 + 2.0 * t)

    def conjugate(self, v, lam):
        v = np.asarray(v, dtype=float)
        return float(v @ v) / (4.0 * lam)


class FrobeniusSquared(Ridge):
    """``||B||_F^2``; the ridge penalty seen as a spectral function."""

    id = "frob_sq"
    spectral = True

    def __init__(self, shape: tuple[int, int] | None = None):
        self.shape = None if shape is None else (int(shape[0]), int(shape[1]))

    def spectral_hessian(self, beta, shape=None):
        shape = _need_shape(self, shape)
        b = np.asarray(beta, dtype=float).reshape(shape)
        return spectral_hessian(b, lambda s: 2.0 * s, lambda s: 2.0 * np.ones_like(s))

    def describe(self):
        return {"id": self.id, "shape": self.shape}

    def __repr__(self):
        return f"FrobeniusSquared(shape={self.shape})"


class Lasso(Regularizer):
    id = "lasso"
    separable_prox = True
    dual_face = True
    has_jacobian = True

    def value(self, beta):
        return float(np.abs(beta).sum())

    def prox(self, z, t):
        return soft_threshold(z, t)

    def jacobian(self, z, t):
        z = np.asarray(z, dtype=float)
        gap = np.abs(np.abs(z) - t)
        if np.any(gap <= BOUNDARY_MARGIN):
            j = int(np.argmin(gap))
            raise DegeneratePointError(f"coordinate {j} sits on the soft-threshold kink")
        return np.diag((np.abs(z) > t).astype(float))

    def hessian(self, beta):
        return np.zeros((np.size(beta), np.size(beta)))

    def dual_norm(self, v):
        return float(np.max(np.abs(v))) if np.size(v) else 0.0


class GroupLasso(Regularizer):
    """Sum of weighted Euclidean norms over a partition of the coordinates.

    Parameters
    ----------
    groups : array_like of int, shape (p,), or list of index arrays
        Either a group label per coordinate or the groups themselves.
    weights : array_like, optional
        One weight per group (defaults to 1), so group ``l`` is penalized at
        level ``lam * weights[l]``.
    """

    id = "group_lasso"
    separable_prox = True
    has_jacobian = True

    def __init__(self, groups, weights=None):
        if len(groups) and np.ndim(groups[0]) == 0:
            labels = np.asarray(groups)
            uniq = list(dict.fromkeys(labels.tolist()))
            idx = [np.flatnonzero(labels == g) for g in uniq]
        else:
            idx = [np.asarray(g, dtype=int) for g in groups]
        allidx = np.concatenate(idx) if idx else np.array([], dtype=int)
        p = allidx.size
        if p == 0 or np.any(np.sort(allidx) != np.arange(p)):
            raise ValueError("groups must partition {0, ..., p-1} disjointly")
        self.groups = [np.sort(g) for g in idx]
        self.p = p
        w = np.ones(len(self.groups)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(self.groups),) or np.any(w <= 0):
            raise ValueError("need one positive weight per group")
        self.weights = w

    def value(self, beta):
        beta = np.asarray(beta, dtype=float)
        return float(sum(w * np.linalg.norm(beta[g]) for g, w in zip(self.groups, self.weights)))

    def prox(self, z, t):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        for g, w in zip(self.groups, self.weights):
            nrm = np.linalg.norm(z[g])
            if nrm > t * w:
                out[g] = (1.0 - t * w / nrm) * z[g]
        return out

    def jacobian(self, z, t):
        z = np.asarray(z, dtype=float)
        jac = np.zeros((z.size, z.size))
        for l, (g, w) in enumerate(zip(self.groups, self.weights)):
            u = z[g]
            nrm = np.linalg.norm(u)
            lam_l = t * w
            if abs(nrm - lam_l) <= BOUNDARY_MARGIN:
                raise DegeneratePointError(f"group {l} sits on the block-threshold boundary")
            if nrm > lam_l:
                block = (1.0 - lam_l / nrm) * np.eye(g.size) + (lam_l / nrm**3) * np.outer(u, u)
                jac[np.ix_(g, g)] = block
        return jac

    def active_groups(self, beta, tol=SUPPORT_TOL) -> list[int]:
        beta = np.asarray(beta, dtype=float)
        return [l for l, g in enumerate(self.groups) if np.linalg.norm(beta[g]) > tol]

    def hessian(self, beta):
        """Hessian of ``R`` on the active groups (zero elsewhere)."""
        beta = np.asarray(beta, dtype=float)
        hess = np.zeros((beta.size, beta.size))
        for l in self.active_groups(beta):
            g, w = self.groups[l], self.weights[l]
            u = beta[g]
            nrm = np.linalg.norm(u)
            hess[np.ix_(g, g)] = (w / nrm) * (np.eye(g.size) - np.outer(u, u) / nrm**2)
        return hess

    def grad_active(self, beta):
        beta = np.asarray(beta, dtype=float)
        out = np.zeros_like(beta)
        for l in self.active_groups(beta, tol=0.0):
            g = self.groups[l]
            out[g] = self.weights[l] * beta[g] / np.linalg.norm(beta[g])
        return out

    def dual_norm(self, v):
        v = np.asarray(v, dtype=float)
        return float(max(np.linalg.norm(v[g]) / w for g, w in zip(self.groups, self.weights)))

    def describe(self):
        return {
            "id": self.id,
            "groups": [g.tolist() for g in self.groups],
            "weights": self.weights.tolist(),
        }


class GeneralizedLasso(Regularizer):
    """``||D beta||_1`` for a fixed ``m x p`` matrix ``D`` (dense or sparse)."""

    id = "gen_lasso"
    dual_face = True

    def __init__(self, D):
        if sp.issparse(D):
            D = D.toarray()
        D = np.atleast_2d(np.asarray(D, dtype=float))
        self.D = D

    @property
    def p(self):
        return self.D.shape[1]

    def value(self, beta):
        return float(np.abs(self.D @ beta).sum())

    def prox(self, z, t, tol=1e-13, max_iter=100000):
        """Prox through its dual, a box-constrained least-squares problem.

        ``prox(z) = z - D' u`` with ``u = argmin_{|u|_inf <= t} ||z - D'u||^2 / 2``.
        """
        z = np.asarray(z, dtype=float)
        D = self.D
        lip = max(np.linalg.norm(D, 2) ** 2, 1e-300)
        u = np.clip(np.linalg.lstsq(D.T, z, rcond=None)[0], -t, t)
        v, s = u.copy(), 1.0
        for _ in range(max_iter):
            g = D @ (D.T @ v - z)
            u_new = np.clip(v - g / lip, -t, t)
            s_new = 0.5 * (1 + np.sqrt(1 + 4 * s * s))
            v = u_new + ((s - 1) / s_new) * (u_new - u)
            if np.linalg.norm(u_new - u) <= tol * max(1.0, np.linalg.norm(u)):
                u = u_new
                break
            u, s = u_new, s_new
        return z - D.T @ u

    def describe(self):
        return {"id": self.id, "D_shape": list(self.D.shape)}


class Slope(Regularizer):
    """Sorted-l1 norm ``sum_i w_i |beta|_(i)`` with nonincreasing ``w >= 0``."""

    id = "slope"
    dual_face = True

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("slope weights must be a nonempty vector")
        if np.any(w < 0) or np.any(np.diff(w) > 0):
            raise ValueError("slope weights must be nonnegative and nonincreasing")
        if w[0] <= 0:
            raise ValueError("slope needs a positive leading weight")
        self.weights = w

    def value(self, beta):
        return float(np.sort(np.abs(beta))[::-1] @ self.weights)

    def prox(self, z, t):
        return sorted_l1_prox(z, t * self.weights)

    def dual_norm(self, v):
        a = np.sort(np.abs(v))[::-1]
        return float(np.max(np.cumsum(a) / np.cumsum(self.weights)))

    def describe(self):
        return {"id": self.id, "weights": self.weights.tolist()}


class LInf(Regularizer):
    id = "linf"
    dual_face = True

    def value(self, beta):
        return float(np.max(np.abs(beta)))

    def prox(self, z, t):
        z = np.asarray(z, dtype=float)
        return z - project_l1_ball(z, t)

    def dual_norm(self, v):
        return float(np.abs(v).sum())


class Nuclear(Regularizer):
    """Sum of singular values of the row-major reshaped coefficient matrix."""

    id = "nuclear"
    spectral = True

    def __init__(self, shape: tuple[int, int] | None = None):
        self.shape = None if shape is None else (int(shape[0]), int(shape[1]))

    def value(self, beta, shape=None):
        b = np.asarray(beta, dtype=float).reshape(_need_shape(self, shape))
        return float(np.linalg.svd(b, compute_uv=False).sum())

    def prox(self, z, t, shape=None):
        shape = _need_shape(self, shape)
        u, s, vt = np.linalg.svd(np.asarray(z, dtype=float).reshape(shape), full_matrices=False)
        return ((u * np.maximum(s - t, 0.0)) @ vt).ravel()

    def dual_norm(self, v, shape=None):
        return float(np.linalg.norm(np.asarray(v).reshape(_need_shape(self, shape)), 2))

    def describe(self):
        return {"id": self.id, "shape": self.shape}

    def __repr__(self):
        return f"Nuclear(shape={self.shape})"


def _need_shape(reg, shape=None):
    shape = shape if shape is not None else getattr(reg, "shape", None)
    if shape is None:
        raise ShapeError(f"{reg.id} needs a matrix shape (p1, p2)")
    return shape


def get_regularizer(name: str, **params) -> Regularizer:
    table = {
        "ridge": Ridge,
        "lasso": Lasso,
        "linf": LInf,
        "group_lasso": GroupLasso,
        "gen_lasso": GeneralizedLasso,
        "slope": Slope,
        "nuclear": Nuclear,
        "frob_sq": FrobeniusSquared,
    }
    if name not in table:
        raise ValueError(f"unknown regularizer {name!r}; choose from {sorted(table)}")
    return table[name](**params)


def first_difference(p: int) -> np.ndarray:
    """``(p-1) x p`` first-difference matrix, the fused-lasso ``D``."""
    D = np.zeros((p - 1, p))
    i = np.arange(p - 1)
    D[i, i] = -1.0
    D[i, i + 1] = 1.0
    return D


def load_triplets(path, shape: tuple[int, int] | None = None) -> sp.csr_matrix:
    """Read ``row,col,value`` lines (0-based, optional header) into a sparse matrix."""
    rows, cols, vals = [], [], []
    with Path(path).open(newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not rec[0].strip():
                continue
            try:
                r, c, v = int(rec[0]), int(rec[1]), float(rec[2])
            except ValueError:
                if not rows:
                    continue  # header
                raise
            rows.append(r)
            cols.append(c)
            vals.append(v)
    return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------


def prox(reg: Regularizer, z, tau: float = 1.0, lam: float = 1.0) -> np.ndarray:
    """Proximal map of ``lam * R`` with step ``tau``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return reg.prox(np.asarray(z, dtype=float), tau * lam)


def prox_jacobian(reg: Regularizer, z, lam: float = 1.0, tau: float = 1.0) -> np.ndarray:
    """Jacobian of ``prox(reg, ., tau, lam)`` at ``z``."""
    return reg.jacobian(np.asarray(z, dtype=float), tau * lam)


def reg_hessian(reg: Regularizer, beta, lam: float = 1.0) -> np.ndarray:
    """Hessian of ``lam * R`` at ``beta``.

    For lasso and group lasso this is the Hessian on the active coordinates
    (zero outside), where the penalty is smooth.
    """
    return lam * reg.hessian(np.asarray(beta, dtype=float))


# ---------------------------------------------------------------------------
# spectral functions
# ---------------------------------------------------------------------------


def _distinct_spectrum(s, tol=BOUNDARY_MARGIN, allow_zero=False):
    if s.size > 1 and np.any(np.abs(np.diff(np.sort(s))) <= tol):
        raise DegenerateSpectrumError("repeated singular values")
    if not allow_zero and np.any(s <= tol):
        raise DegenerateSpectrumError("zero singular value")


def _spectral_blocks(sigma, fp, fpp, p1, p2) -> np.ndarray:
    """Coefficient matrix (rotated basis) of the Hessian of ``sum f(sigma)``."""
    p3 = min(p1, p2)
    n = p1 * p2
    g = np.zeros((n, n))
    idx = lambda s, t: s * p2 + t  # noqa: E731
    for s in range(p3):
        g[idx(s, s), idx(s, s)] = fpp[s]
    for s in range(p3):
        for t in range(p3):
            if s == t:
                continue
            den = sigma[s] ** 2 - sigma[t] ** 2
            g[idx(s, t), idx(s, t)] = (sigma[s] * fp[s] - sigma[t] * fp[t]) / den
            g[idx(s, t), idx(t, s)] = -(sigma[s] * fp[t] - sigma[t] * fp[s]) / den
    for s in range(p3, p1):
        for t in range(p3):
            g[idx(s, t), idx(s, t)] = fp[t] / sigma[t]
    for t in range(p3, p2):
        for s in range(p3):
            g[idx(s, t), idx(s, t)] = fp[s] / sigma[s]
    return g


def spectral_hessian(B, fprime: Callable, fsecond: Callable) -> np.ndarray:
    """Hessian of ``B -> sum_s f(sigma_s(B))`` in row-major ``vec`` coordinates.

    Requires distinct, nonzero singular values.  The result is
    ``Q G Q'`` where ``Q = kron(U, V)`` collects ``vec(u_s v_t')`` and ``G``
    holds the scalar couplings.
    """
    B = np.asarray(B, dtype=float)
    p1, p2 = B.shape
    u, s, vt = np.linalg.svd(B, full_matrices=True)
    _distinct_spectrum(s)
    g = _spectral_blocks(s, fprime(s), fsecond(s), p1, p2)
    q = np.kron(u, vt.T)
    h = q @ g @ q.T
    return 0.5 * (h + h.T)


def nuclear_rotation(B, subgrad, tol: float = NUCLEAR_TOL):
    """Singular bases of ``B`` completed by the subgradient on its null part.

    Parameters
    ----------
    B : ndarray (p1, p2) with ``p1 >= p2``
    subgrad : ndarray (p1, p2)
        A subgradient of the nuclear norm at ``B``, e.g. ``X'(y - X b) / lam``
        reshaped.
    tol : float
        Singular values at most ``tol * sigma_max`` count as zero.

    Returns
    -------
    u : (p1, p1), v : (p2, p2), sigma : (p2,), g : (p2,), m : int
        ``g[s] = 1`` for the ``m`` leading directions and the singular values
        of the subgradient restricted to the complement otherwise.
    """
    B = np.asarray(B, dtype=float)
    p1, p2 = B.shape
    uf, sf, vtf = np.linalg.svd(B, full_matrices=True)
    m = int(np.sum(sf > tol * sf[0])) if sf[0] > 0 else 0
    if m > 1 and np.any(np.abs(np.diff(sf[:m])) <= BOUNDARY_MARGIN):
        raise DegenerateSpectrumError("repeated nonzero singular values")
    u1, v1 = uf[:, :m], vtf.T[:, :m]
    pu, pv = uf[:, m:], vtf.T[:, m:]
    core = pu.T @ np.asarray(subgrad, dtype=float) @ pv
    if core.size:
        cu, cs, cvt = np.linalg.svd(core, full_matrices=True)
    else:
        cu, cs, cvt = np.eye(p1 - m), np.zeros(0), np.eye(p2 - m)
    u = np.hstack([u1, pu @ cu])
    v = np.hstack([v1, pv @ cvt.T])
    sigma = np.concatenate([sf[:m], np.zeros(p2 - m)])
    g = np.concatenate([np.ones(m), cs, np.zeros(p2 - m - cs.size)])
    return u, v, sigma, g, m


# ---------------------------------------------------------------------------
# active sets and faces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActiveSetInfo:
    """Local structure of the solution that the ALO formulas need.

    ``indices`` holds the active coordinates (lasso, group), the tight dual
    constraints (gen_lasso rows, slope prefixes) or the coordinates with
    zero dual correlation (linf).  ``face_basis`` is built from the design
    passed to :func:`active_set`; :meth:`face_matrix` rebuilds it for another
    design (the dual engine uses a rescaled one).
    """

    kind: str
    indices: np.ndarray
    signs: np.ndarray | None = None
    face_basis: np.ndarray | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(len(self.indices))

    def face_matrix(self, x: np.ndarray) -> np.ndarray:
        """Columns spanning the local face for design ``x``."""
        k = self.kind
        if k in ("lasso", "ridge", "group_lasso", "frob_sq"):
            return x[:, self.indices]
        if k == "gen_lasso":
            return x @ self.extra["null_basis"]
        if k == "linf":
            if self.extra.get("interior"):
                return np.zeros((x.shape[0], 0))
            rest = self.extra["saturated"]
            col = x[:, rest] @ self.signs[rest]
            return np.column_stack([x[:, self.indices], col])
        if k == "slope":
            order = self.extra["order"]
            z = x[:, order] * self.signs[order]
            return np.cumsum(z, axis=1)[:, self.indices]
        raise ValueError(f"no face matrix for {k}")


def _theta(fit: FitResult) -> np.ndarray:
    if fit.theta is None:
        raise StaleFitError("fit carries no dual vector")
    return np.asarray(fit.theta)


def active_set(
    reg: Regularizer,
    fit: FitResult,
    data: Dataset,
    tol: float | None = None,
    lam: float | None = None,
) -> ActiveSetInfo:
    """Active set / dual face of the fitted model.

    ``lam`` defaults to ``fit.lam``.  ``tol`` defaults to 1e-8 except for the
    nuclear norm (1e-3 relative to the largest singular value).
    """
    if not fit.converged:
        raise StaleFitError(f"fit did not converge (residual {fit.grad_norm:.3g})")
    lam = fit.lam if lam is None else lam
    if lam is None:
        raise StaleFitError("penalty level unknown; pass lam")
    beta = np.asarray(fit.beta)
    kind = reg.id

    if kind in ("ridge", "frob_sq"):
        idx = np.arange(beta.size)
        return ActiveSetInfo(kind, idx, None, data.x)

    if kind == "lasso":
        tol = SUPPORT_TOL if tol is None else tol
        idx = np.flatnonzero(np.abs(beta) > tol)
        return ActiveSetInfo(kind, idx, np.sign(beta[idx]), data.x[:, idx])

    if kind == "group_lasso":
        tol = SUPPORT_TOL if tol is None else tol
        groups = reg.active_groups(beta, tol)
        idx = (
            np.concatenate([reg.groups[l] for l in groups]) if groups else np.array([], dtype=int)
        )
        return ActiveSetInfo(kind, np.sort(idx), None, data.x[:, np.sort(idx)], {"groups": groups})

    if kind == "gen_lasso":
        tol = SUPPORT_TOL if tol is None else tol
        D = reg.D
        u_hat = fit.aux.get("u_hat") if fit.aux else None
        if u_hat is None:
            u_hat = np.linalg.lstsq(D.T, data.x.T @ _theta(fit), rcond=None)[0]
        u_hat = np.asarray(u_hat)
        tight = (np.abs(u_hat) >= lam * (1 - tol)) | (np.abs(D @ beta) > tol)
        E = np.flatnonzero(tight)
        B = null_space_qr(D[~tight])
        return ActiveSetInfo(
            kind, E, np.sign(u_hat[E]), data.x @ B, {"null_basis": B, "u_hat": u_hat}
        )

    if kind == "linf":
        tol = SUPPORT_TOL if tol is None else tol
        z = fit.aux.get("z_hat") if fit.aux else None
        if z is None:
            z = data.x.T @ _theta(fit)
        z = np.asarray(z)
        signs = np.where(z >= 0, 1.0, -1.0)
        if np.abs(z).sum() < lam * (1 - tol):
            info = ActiveSetInfo(kind, np.arange(z.size), signs, None, {"interior": True})
            return ActiveSetInfo(kind, info.indices, signs, info.face_matrix(data.x), info.extra)
        E = np.flatnonzero(np.abs(z) <= tol * max(lam, 1.0))
        rest = np.flatnonzero(np.abs(z) > tol * max(lam, 1.0))
        info = ActiveSetInfo(kind, E, signs, None, {"saturated": rest, "interior": False})
        W = info.face_matrix(data.x)
        if _column_rank(W) < W.shape[1]:
            raise ConditioningError("linf face matrix is rank deficient")
        return ActiveSetInfo(kind, E, signs, W, info.extra)

    if kind == "slope":
        tol = SUPPORT_TOL if tol is None else tol
        c = data.x.T @ _theta(fit)
        order = np.argsort(-np.abs(c), kind="stable")
        ratio = np.cumsum(np.abs(c)[order]) / np.cumsum(lam * reg.weights)
        # a drop in the sorted |beta| after position k also makes prefix k
        # tight (complementary slackness); this does not rely on dual accuracy
        b = np.append(np.abs(beta)[order], 0.0)
        E = np.flatnonzero((ratio >= 1 - tol) | (b[:-1] - b[1:] > tol))
        signs = np.where(c >= 0, 1.0, -1.0)
        info = ActiveSetInfo(kind, E, signs, None, {"order": order})
        W = info.face_matrix(data.x)
        if _column_rank(W) < W.shape[1]:
            raise ConditioningError("slope face matrix is rank deficient")
        return ActiveSetInfo(kind, E, signs, W, info.extra)

    if kind == "nuclear":
        tol = NUCLEAR_TOL if tol is None else tol
        shape = _need_shape(reg, data.matrix_shape)
        B = beta.reshape(shape)
        resid = _theta(fit)
        G = (data.x.T @ resid / lam).reshape(shape)
        transposed = shape[0] < shape[1]
        if transposed:
            B, G = B.T, G.T
        u, v, sigma, g, m = nuclear_rotation(B, G, tol)
        p1, p2 = B.shape
        E = np.array([s * p2 + t for s in range(p1) for t in range(p2) if s < m or t < m], dtype=int)
        return ActiveSetInfo(
            kind,
            E,
            None,
            None,
            {"u": u, "v": v, "sigma": sigma, "g": g, "rank": m, "transposed": transposed},
        )

    raise ValueError(f"no active-set rule for {kind}")
