"""Loss functions ``loss(u; y)`` of the linear predictor ``u = x' beta``.

Each loss exposes its value, first and second derivative in ``u``, the list
of kinks ("singularities") with one-sided derivatives there, and for smooth
losses the first two derivatives of the Fenchel conjugate.  The conjugate
derivatives feed the dual ALO engine, which rewrites a general smooth loss
as a weighted least-squares problem.

All methods are vectorized over ``u`` and ``y``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .core import CurvatureError, Dataset, FitResult, UnsupportedEngineError

__all__ = [
    "LossModel",
    "SquaredLoss",
    "LogisticLoss",
    "HingeLoss",
    "LossEval",
    "get_loss",
    "loss_eval",
    "partition_singular",
    "dual_transform",
]

SINGULARITY_TOL = 1e-5


class LossModel:
    """Base class.  Subclasses set ``id`` and ``smooth`` and fill in the maths."""

    id: str = ""
    smooth: bool = True

    def value(self, u, y):
        raise NotImplementedError

    def d1(self, u, y):
        raise NotImplementedError

    def d2(self, u, y):
        raise NotImplementedError

    def singularities(self, y) -> np.ndarray:
        """Kink locations in ``u`` for each response, shape ``(n, k)``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return np.empty((y.size, 0))

    def d1_left(self, v, y):
        return self.d1(v, y)

    def d1_right(self, v, y):
        return self.d1(v, y)

    def d1_range(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Open interval containing every value of ``d1(., y)``."""
        y = np.asarray(y, dtype=float)
        return np.full(y.shape, -np.inf), np.full(y.shape, np.inf)

    # conjugate -----------------------------------------------------------

    def conj_d1(self, s, y):
        """Derivative of the conjugate at ``s``: the ``u`` with ``d1(u, y) = s``."""
        if not self.smooth:
            raise UnsupportedEngineError(f"{self.id} loss has no differentiable conjugate")
        return _invert_derivative(self, np.asarray(s, dtype=float), np.asarray(y, dtype=float))

    def conj_d2(self, s, y):
        """Second derivative of the conjugate, ``1 / d2(u*, y)`` at ``u* = conj_d1(s)``."""
        u = self.conj_d1(s, y)
        return 1.0 / self.d2(u, y)

    def __repr__(self):
        return f"{type(self).__name__}()"


class SquaredLoss(LossModel):
    """``(u - y)^2 / 2``."""

    id = "squared"

    def value(self, u, y):
        return 0.5 * (np.asarray(u, dtype=float) - y) ** 2

    def d1(self, u, y):
        return np.asarray(u, dtype=float) - y

    def d2(self, u, y):
        return np.ones(np.broadcast(np.asarray(u), np.asarray(y)).shape)

    def conj_d1(self, s, y):
        return np.asarray(s, dtype=float) + y

    def conj_d2(self, s, y):
        return np.ones(np.broadcast(np.asarray(s), np.asarray(y)).shape)


class LogisticLoss(LossModel):
    """``log(1 + exp(-y u))`` for labels ``y`` in {-1, +1}."""

    id = "logistic"

    def value(self, u, y):
        return np.logaddexp(0.0, -np.asarray(y, dtype=float) * u)

    def d1(self, u, y):
        y = np.asarray(y, dtype=float)
        return -y * expit(-y * np.asarray(u, dtype=float))

    def d2(self, u, y):
        t = np.asarray(y, dtype=float) * np.asarray(u, dtype=float)
        return expit(t) * expit(-t)

    def d1_range(self, y):
        y = np.asarray(y, dtype=float)
        return np.minimum(-y, 0.0), np.maximum(-y, 0.0)


class HingeLoss(LossModel):
    """``max(0, 1 - y u)``, kinked at ``u = y`` for ``y`` in {-1, +1}."""

    id = "hinge"
    smooth = False

    def value(self, u, y):
        return np.maximum(0.0, 1.0 - np.asarray(y, dtype=float) * u)

    def d1(self, u, y):
        y = np.asarray(y, dtype=float)
        m = y * np.asarray(u, dtype=float)
        return np.where(m < 1.0, -y, np.where(m > 1.0, 0.0, np.nan))

    def d2(self, u, y):
        m = np.asarray(y, dtype=float) * np.asarray(u, dtype=float)
        return np.where(m == 1.0, np.nan, 0.0)

    def singularities(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return (1.0 / y)[:, None]

    def d1_left(self, v, y):
        # just below the kink y*u < 1 when y = +1, y*u > 1 when y = -1
        y = np.asarray(y, dtype=float)
        return np.where(y > 0, -1.0, 0.0)

    def d1_right(self, v, y):
        y = np.asarray(y, dtype=float)
        return np.where(y > 0, 0.0, 1.0)

    def d1_range(self, y):
        y = np.asarray(y, dtype=float)
        return np.minimum(-y, 0.0), np.maximum(-y, 0.0)


_LOSSES = {"squared": SquaredLoss, "logistic": LogisticLoss, "hinge": HingeLoss}


def get_loss(name: str) -> LossModel:
    try:
        return _LOSSES[name]()
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; choose from {sorted(_LOSSES)}") from None


def _invert_derivative(loss: LossModel, s, y, tol=1e-12, max_iter=200):
    """Solve ``loss.d1(u, y) = s`` for ``u`` by bracketed Newton.

    ``d1`` is increasing in ``u`` for a convex loss, so a bracket is grown
    until it straddles ``s`` and Newton steps that leave it are replaced by
    bisection.
    """
    s, y = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(y, dtype=float))
    lo_r, hi_r = loss.d1_range(y)
    if np.any((s <= lo_r) | (s >= hi_r)):
        raise CurvatureError("conjugate argument outside the range of the loss derivative")
    lo = np.full(s.shape, -1.0)
    hi = np.full(s.shape, 1.0)
    for _ in range(200):
        bad = loss.d1(lo, y) > s
        if not bad.any():
            break
        lo = np.where(bad, 2.0 * lo, lo)
    for _ in range(200):
        bad = loss.d1(hi, y) < s
        if not bad.any():
            break
        hi = np.where(bad, 2.0 * hi, hi)
    u = 0.5 * (lo + hi)
    for _ in range(max_iter):
        g = loss.d1(u, y) - s
        lo = np.where(g < 0, u, lo)
        hi = np.where(g > 0, u, hi)
        h = loss.d2(u, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = u - g / h
        inside = np.isfinite(step) & (step > lo) & (step < hi)
        u_new = np.where(inside, step, 0.5 * (lo + hi))
        done = np.abs(u_new - u) <= tol * np.maximum(1.0, np.abs(u))
        u = u_new
        if done.all():
            break
    return u


class LossEval(NamedTuple):
    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    singular: np.ndarray


def loss_eval(model: LossModel, u, y, tol: float = SINGULARITY_TOL) -> LossEval:
    """Value and derivatives, with NaN derivatives where ``u`` sits on a kink.

    ``singular`` marks entries within ``tol`` of a singularity.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    u, y = np.broadcast_arrays(u, y)
    sing = np.zeros(u.shape, dtype=bool)
    kinks = model.singularities(y.ravel())
    if kinks.shape[1]:
        sing = (np.abs(u.ravel()[:, None] - kinks) <= tol).any(axis=1).reshape(u.shape)
    val = model.value(u, y)
    d1 = np.where(sing, np.nan, model.d1(u, y))
    d2 = np.where(sing, np.nan, model.d2(u, y))
    return LossEval(val, d1, d2, sing)


def partition_singular(
    model: LossModel, fit: FitResult, data: Dataset, tol: float = SINGULARITY_TOL
) -> tuple[np.ndarray, np.ndarray]:
    """Split observations into kink set V and smooth set S.

    ``V = {j : |u_j - v| <= tol for a kink v of loss(., y_j)}`` with
    ``u_j`` the fitted linear predictor.
    """
    kinks = model.singularities(data.y)
    if kinks.shape[1] == 0:
        return np.array([], dtype=int), np.arange(data.n)
    u = fit.fitted(data)
    in_v = (np.abs(u[:, None] - kinks) <= tol).any(axis=1)
    if kinks.shape[1] > 1:
        hits = (np.abs(u[:, None] - kinks) <= tol).sum(axis=1)
        if np.any(hits > 1):
            raise ValueError("observation within tolerance of two kinks; lower the tolerance")
    return np.flatnonzero(in_v), np.flatnonzero(~in_v)


def dual_transform(model: LossModel, fit: FitResult, data: Dataset):
    """Rewrite a smooth-loss problem as least squares for the dual engine.

    Returns
    -------
    x_u : ndarray (n, p)
        ``K^{-1} X``.
    y_u : ndarray (n,)
        ``(theta_j * c_j + yhat_j) / K_j`` with ``c_j`` the conjugate
        curvature at ``-theta_j``.
    k : ndarray (n,)
        Diagonal of ``K``, ``K_j = sqrt(c_j)``.
    """
    if not model.smooth:
        raise UnsupportedEngineError(f"the dual engine needs a smooth loss, got {model.id}")
    theta = fit.theta
    if theta is None:
        theta = -model.d1(fit.fitted(data), data.y)
    c = model.conj_d2(-theta, data.y)
    if np.any(~(c > 0)) or np.any(~np.isfinite(c)):
        raise CurvatureError("conjugate curvature is not strictly positive and finite")
    k = np.sqrt(c)
    yhat = data.x @ fit.beta
    if fit.intercept_value is not None:
        yhat = yhat + fit.intercept_value
    x_u = data.x / k[:, None]
    y_u = (theta * c + yhat) / k
    return x_u, y_u, k
