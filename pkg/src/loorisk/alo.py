"""Approximate leave-one-out predictions from a single fit.

Every engine returns ``y_tilde_i``, an approximation of the prediction for
observation ``i`` by the model refitted without it, together with the
leverage-like diagonal it used:

``smooth_primal``   one Newton step from the full fit (twice differentiable
                    loss and penalty);
``nonsmooth_loss``  kinked losses (hinge): limit formulas over the kink set V;
``nonsmooth_reg``   separable nonsmooth penalties: Newton step on the active set;
``dual``            norm penalties through the Jacobian of the dual projection,
                    which is a projector onto a face of the dual ball;
``proximal``        fixed-point linearization of ``beta = prox(beta - grad)``;
``constrained``     projected fixed point for smooth problems over convex sets;
``nuclear``         nuclear-norm matrix regression in the singular basis.

Observations whose leverage saturates (denominator ``1 - H_ii`` at most
``1e-10``) get a NaN prediction, are listed in ``AloReport.flagged`` and are
left out of the risk; a :class:`LeverageSaturationWarning` is issued.  A
softer warning is attached whenever a projector diagonal exceeds
``1 - 1e-6``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .core import (
    AloReport,
    AssumptionViolation,
    ConditioningError,
    Dataset,
    FitResult,
    ModelSpec,
    StaleFitError,
    UnsupportedEngineError,
    default_error_fn,
    eval_risk,
)
from .losses import SINGULARITY_TOL, HingeLoss, SquaredLoss, dual_transform, partition_singular
from .regularizers import (
    GeneralizedLasso,
    GroupLasso,
    Lasso,
    LInf,
    Nuclear,
    Ridge,
    Slope,
    _column_rank,
    active_set,
    orthonormal_basis,
    prox_jacobian,
)
from .constraints import polyhedron_jacobian, psd_jacobian
from .solvers import dual_from_primal

__all__ = [
    "ENGINES",
    "HatDiagnostics",
    "LeverageSaturationWarning",
    "hat_from_woodbury",
    "alo_smooth_primal",
    "alo_nonsmooth_loss",
    "alo_nonsmooth_reg",
    "alo_dual",
    "alo_proximal",
    "alo_constrained",
    "alo_nuclear",
    "nuclear_curvature",
    "select_engine",
    "compute_alo",
]

ENGINES = (
    "smooth_primal",
    "nonsmooth_loss",
    "nonsmooth_reg",
    "dual",
    "proximal",
    "constrained",
    "nuclear",
)
SATURATION_WARN = 1e-6
SATURATION_SKIP = 1e-10
JITTERS = (0.0, 1e-12, 1e-10)


class LeverageSaturationWarning(UserWarning):
    """Some observations have leverage at (or numerically near) one."""


@dataclass(frozen=True)
class HatDiagnostics:
    """Diagonal of a generalized hat matrix and what it took to get it.

    ``conditioning`` is the smallest squared Cholesky pivot met, relative to
    the largest diagonal entry of the inner matrix.
    """

    h_diag: np.ndarray
    a_coeffs: np.ndarray | None = None
    g_sub: np.ndarray | None = None
    conditioning: float = np.nan


# ---------------------------------------------------------------------------
# linear algebra kernels
# ---------------------------------------------------------------------------


def _cholesky(m: np.ndarray):
    """Lower Cholesky factor with jitter escalation; returns (factor, pivot ratio)."""
    m = 0.5 * (m + m.T)
    scale = max(float(np.max(np.abs(np.diag(m)))) if m.size else 1.0, 1e-300)
    for jit in JITTERS:
        try:
            c = sla.cholesky(m + jit * scale * np.eye(m.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            continue
        piv = float(np.min(np.diag(c)) ** 2 / scale) if m.size else 1.0
        if piv > 1e-15 or jit == JITTERS[-1]:
            return c, piv
    raise ConditioningError("inner matrix is not positive definite even after jitter")


def hat_from_woodbury(inner: np.ndarray, x: np.ndarray, curvature: np.ndarray | None = None) -> HatDiagnostics:
    """Diagonal of ``X M^{-1} X'`` without forming the ``n x n`` matrix.

    Parameters
    ----------
    inner : ndarray (k, k)
        Symmetric positive definite ``M``.
    x : ndarray (n, k)
    curvature : ndarray (n,), optional
        Loss curvatures.  When given, an unpenalized intercept is added
        through the rank-one update
        ``H = H0 + (1 - H0 c)(1 - H0 c)' / (sum(c) - c' H0 c)``.
    """
    n, k = x.shape
    if k == 0:
        h = np.zeros(n)
        piv = 1.0
        if curvature is None:
            return HatDiagnostics(h, conditioning=piv)
        a = float(np.sum(curvature))
        if a <= 0:
            raise ConditioningError("intercept curvature is zero")
        return HatDiagnostics(np.full(n, 1.0 / a), conditioning=piv)
    c, piv = _cholesky(inner)
    z = sla.solve_triangular(c, x.T, lower=True)
    h = np.einsum("ij,ij->j", z, z)
    if curvature is not None:
        curvature = np.asarray(curvature, dtype=float)
        v = sla.solve_triangular(c, x.T @ curvature, lower=True)
        h0c = z.T @ v
        den = float(np.sum(curvature) - curvature @ h0c)
        if den <= 1e-12 * max(1.0, float(np.sum(curvature))):
            raise ConditioningError("intercept Schur complement is not positive")
        h = h + (1.0 - h0c) ** 2 / den
    return HatDiagnostics(h, conditioning=piv)


def _projector_diag(w: np.ndarray, allow_rank_deficient: bool = False) -> np.ndarray:
    """Diagonal of the orthogonal projector onto ``range(w)``."""
    if w.shape[1] == 0:
        return np.zeros(w.shape[0])
    if not allow_rank_deficient and _column_rank(w) < w.shape[1]:
        raise ConditioningError("face basis is rank deficient")
    q = orthonormal_basis(w)
    return np.einsum("ij,ij->i", q, q)


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------


def _report(engine, spec, data, fit, pred, hdiag, denom, active, d, notes, projector=False):
    d = d or default_error_fn(data)
    notes = list(notes)
    pred = np.array(pred, dtype=float)
    flagged = np.flatnonzero(np.asarray(denom) <= SATURATION_SKIP)
    if flagged.size:
        pred[flagged] = np.nan
        notes.append(
            f"leverage saturated for {flagged.size} observation(s); "
            "their predictions are omitted from the risk"
        )
    if projector:
        near = np.flatnonzero(np.asarray(hdiag) > 1 - SATURATION_WARN)
        if near.size:
            notes.append(f"hat diagonal above 1-1e-6 for {near.size} observation(s)")
    for msg in notes:
        if "leverage" in msg or "hat diagonal" in msg:
            warnings.warn(f"lambda={spec.lam:.4g}: {msg}", LeverageSaturationWarning, stacklevel=3)
    ok = np.isfinite(pred)
    risk = eval_risk(data.y[ok], pred[ok], d) if ok.any() else np.nan
    return AloReport(
        predictions=pred,
        hat_diag=np.asarray(hdiag, dtype=float),
        risk=risk,
        active_set_size=int(active),
        engine=engine,
        error_fn=d,
        lam=spec.lam,
        warnings=tuple(notes),
        flagged=tuple(int(i) for i in flagged),
    )


def _check_fit(fit: FitResult, spec: ModelSpec):
    if fit.lam is not None and not np.isclose(fit.lam, spec.lam, rtol=1e-12, atol=0):
        raise StaleFitError(f"fit is for lambda={fit.lam}, spec has {spec.lam}")
    if spec.intercept != (fit.intercept_value is not None):
        raise StaleFitError("intercept setting of the fit and the spec differ")
    notes = []
    if not fit.converged:
        notes.append(f"fit did not converge (residual {fit.grad_norm:.3g})")
    return notes


def _smooth_parts(spec, data, fit):
    u = fit.fitted(data)
    return u, spec.loss.d1(u, data.y), spec.loss.d2(u, data.y)


def _newton_update(u, l1, l2, h):
    denom = 1.0 - h * l2
    with np.errstate(divide="ignore", invalid="ignore"):
        pred = u + h * l1 / denom
    return pred, denom


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------


def alo_smooth_primal(spec: ModelSpec, data: Dataset, fit: FitResult, d: str | None = None) -> AloReport:
    """One Newton step: ``y_tilde = u + H_ii l' / (1 - H_ii l'')``.

    ``H = X [X' diag(l'') X + lam * Hess R]^{-1} X'``; with an intercept the
    all-ones column is added as an unpenalized coordinate.
    """
    reg = spec.regularizer
    if not (spec.loss.smooth and reg.smooth_hessian):
        raise UnsupportedEngineError("smooth_primal needs a smooth loss and a smooth penalty")
    notes = _check_fit(fit, spec)
    u, l1, l2 = _smooth_parts(spec, data, fit)
    x = data.x
    inner = (x.T * l2) @ x + spec.lam * reg.hessian(fit.beta)
    hd = hat_from_woodbury(inner, x, l2 if spec.intercept else None)
    pred, denom = _newton_update(u, l1, l2, hd.h_diag)
    return _report("smooth_primal", spec, data, fit, pred, hd.h_diag, denom, data.p, d, notes)


def alo_nonsmooth_reg(
    spec: ModelSpec, data: Dataset, fit: FitResult, d: str | None = None, tol: float | None = None
) -> AloReport:
    """Newton step restricted to the active set of a separable nonsmooth penalty."""
    reg = spec.regularizer
    if not spec.loss.smooth:
        raise UnsupportedEngineError("nonsmooth_reg needs a smooth loss")
    if not isinstance(reg, (Lasso, GroupLasso, Ridge)):
        raise UnsupportedEngineError(f"nonsmooth_reg does not handle {reg.id}")
    notes = _check_fit(fit, spec)
    u, l1, l2 = _smooth_parts(spec, data, fit)
    info = active_set(reg, fit, data, tol, spec.lam)
    A = info.indices
    xa = data.x[:, A]
    hess = spec.lam * reg.hessian(fit.beta)[np.ix_(A, A)]
    inner = (xa.T * l2) @ xa + hess
    hd = hat_from_woodbury(inner, xa, l2 if spec.intercept else None)
    pred, denom = _newton_update(u, l1, l2, hd.h_diag)
    return _report("nonsmooth_reg", spec, data, fit, pred, hd.h_diag, denom, A.size, d, notes)


def alo_dual(
    spec: ModelSpec, data: Dataset, fit: FitResult, d: str | None = None, tol: float | None = None
) -> AloReport:
    """Dual-projection engine: ``y_tilde = y - theta / J_ii`` (squared loss).

    ``J = I - H`` where ``H`` projects onto the face of the dual ball at the
    optimum (lasso, gen_lasso, linf, slope), or ``J = (I + X (lam Hess R)^{-1} X')^{-1}``
    for ridge-type penalties.  Other smooth losses are mapped to least
    squares first (rows rescaled by the conjugate curvature) and the result
    is mapped back.
    """
    reg, loss = spec.regularizer, spec.loss
    if not loss.smooth:
        raise UnsupportedEngineError("the dual engine needs a smooth loss; use nonsmooth_loss")
    notes = _check_fit(fit, spec)
    if isinstance(loss, SquaredLoss):
        x_u, y_u, k = data.x, data.y, np.ones(data.n)
        theta = data.y - fit.fitted(data)
    else:
        x_u, y_u, k = dual_transform(loss, fit, data)
        theta = fit.theta if fit.theta is not None else -loss.d1(fit.fitted(data), data.y)
    if reg.smooth_hessian:
        if spec.intercept:
            raise UnsupportedEngineError("dual engine with ridge-type penalty does not take an intercept")
        hess = spec.lam * reg.hessian(fit.beta)
        c, _ = _cholesky(hess)
        z = sla.solve_triangular(c, x_u.T, lower=True)
        jmat = np.linalg.inv(np.eye(data.n) + z.T @ z)
        jdiag = np.diag(jmat).copy()
        h = 1.0 - jdiag
        active = data.p
    elif reg.dual_face:
        info = active_set(reg, fit, data, tol, spec.lam)
        w = info.face_matrix(x_u)
        if spec.intercept:
            w = np.column_stack([1.0 / k, w])
        h = _projector_diag(w, allow_rank_deficient=isinstance(reg, GeneralizedLasso))
        jdiag = 1.0 - h
        active = info.size
    else:
        raise UnsupportedEngineError(f"dual engine does not handle {reg.id}")
    with np.errstate(divide="ignore", invalid="ignore"):
        pred = k * (y_u - k * theta / jdiag)
    return _report("dual", spec, data, fit, pred, h, jdiag, active, d, notes, projector=True)


def alo_proximal(
    spec: ModelSpec,
    data: Dataset,
    fit: FitResult,
    d: str | None = None,
    form: str = "auto",
) -> AloReport:
    """Linearize ``beta = prox(beta - X' l')`` around the fit.

    ``H = X_E (J_EE X_E' diag(l'') X_E + I - J_EE)^{-1} J_EE X_E'`` with ``J``
    the prox Jacobian and ``E`` its nonzero rows.  ``form="simplified"``
    uses the symmetric group-lasso version
    ``H = X_E [X_E' diag(l'') X_E + lam * Hess R_E]^{-1} X_E'``.
    """
    reg = spec.regularizer
    if not spec.loss.smooth:
        raise UnsupportedEngineError("the proximal engine needs a smooth loss")
    if not reg.has_jacobian:
        raise UnsupportedEngineError(f"{reg.id} has no proximal Jacobian")
    notes = _check_fit(fit, spec)
    u, l1, l2 = _smooth_parts(spec, data, fit)
    x = data.x
    z = fit.beta - x.T @ l1
    jac = prox_jacobian(reg, z, spec.lam)
    E = np.flatnonzero(np.abs(jac).sum(axis=1) > 0)
    if form == "auto":
        form = "simplified" if isinstance(reg, GroupLasso) else "general"
    xe = x[:, E]
    if form == "simplified":
        inner = (xe.T * l2) @ xe + spec.lam * reg.hessian(fit.beta)[np.ix_(E, E)]
        h = hat_from_woodbury(inner, xe, l2 if spec.intercept else None).h_diag
    elif form == "general":
        jee = jac[np.ix_(E, E)]
        if spec.intercept:
            xe = np.column_stack([np.ones(data.n), xe])
            jee = sla.block_diag(1.0, jee)
        m = jee @ ((xe.T * l2) @ xe) + np.eye(jee.shape[0]) - jee
        if m.size:
            lu, piv = sla.lu_factor(m)
            if np.min(np.abs(np.diag(lu))) <= 1e-14 * max(1.0, np.max(np.abs(np.diag(lu)))):
                raise ConditioningError("proximal inner matrix is singular")
            zz = sla.lu_solve((lu, piv), jee @ xe.T)
            h = np.einsum("ij,ji->i", xe, zz)
        else:
            h = np.zeros(data.n)
    else:
        raise ValueError(f"unknown form {form!r}")
    pred, denom = _newton_update(u, l1, l2, h)
    return _report("proximal", spec, data, fit, pred, h, denom, E.size, d, notes)


def alo_constrained(spec: ModelSpec, data: Dataset, fit: FitResult, d: str | None = None) -> AloReport:
    """Constrained smooth problems: ``beta_i = proj_C(beta + G x_i l' / (1 - x_i' G x_i l''))``.

    ``G = (J V + I - J)^{-1} J`` with ``V = X' diag(l'') X + lam * Hess R`` and
    ``J`` the projection Jacobian at ``beta - X' l' - lam grad R``; for
    polyhedra ``G = Gamma (Gamma' V Gamma)^{-1} Gamma'``.
    """
    con, reg = spec.constraint, spec.regularizer
    if con is None:
        raise UnsupportedEngineError("constrained engine needs a constraint")
    notes = _check_fit(fit, spec)
    u, l1, l2 = _smooth_parts(spec, data, fit)
    x = data.x
    beta = fit.beta
    v = beta - x.T @ l1 - spec.lam * reg.grad(beta)
    vmat = (x.T * l2) @ x + spec.lam * reg.hessian(beta)
    if con.polyhedral:
        _, gamma = polyhedron_jacobian(con, v)
        if gamma.shape[1]:
            c, _ = _cholesky(gamma.T @ vmat @ gamma)
            half = sla.solve_triangular(c, gamma.T, lower=True)
            g = half.T @ half
        else:
            g = np.zeros((data.p, data.p))
        active = gamma.shape[1]
    else:
        jac = psd_jacobian(con, v.reshape(con.p, con.p))
        m = jac @ vmat + np.eye(data.p) - jac
        g = np.linalg.solve(m, jac)
        g = 0.5 * (g + g.T)
        vm = v.reshape(con.p, con.p)
        active = int(np.sum(np.linalg.eigvalsh(0.5 * (vm + vm.T)) > 0))
    if spec.intercept:
        a = float(np.sum(l2))
        b = x.T @ l2
        gb = g @ b
        den = a - float(b @ gb)
        if den <= 1e-12 * max(1.0, a):
            raise ConditioningError("intercept Schur complement is not positive")
        g1 = np.zeros((data.p + 1, data.p + 1))
        g1[1:, 1:] = g
        vec = np.concatenate([[1.0], -gb])
        g1 += np.outer(vec, vec) / den
        xt = np.column_stack([np.ones(data.n), x])
        b0 = fit.intercept_value
    else:
        g1, xt, b0 = g, x, 0.0
    s = xt @ g1
    hg = np.einsum("ij,ij->i", s, xt)
    denom = 1.0 - hg * l2
    pred = np.empty(data.n)
    off = 1 if spec.intercept else 0
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = l1 / denom
    for i in range(data.n):
        step = s[i] * coef[i]
        bt = con.project(beta + step[off:])
        pred[i] = x[i] @ bt + (b0 + step[0] if off else 0.0)
    return _report("constrained", spec, data, fit, pred, hg, denom, active, d, notes)


def alo_nonsmooth_loss(
    spec: ModelSpec,
    data: Dataset,
    fit: FitResult,
    d: str | None = None,
    tol: float = SINGULARITY_TOL,
) -> AloReport:
    """Kinked losses: ``y_tilde_i = u_i + a_i g_i``.

    ``V`` is the set of observations sitting on a kink and ``S`` the rest.
    With ``Y = lam * Hess R + X_S' diag(l'') X_S`` and
    ``M = X_V Y^{-1} X_V'``: on ``S`` the coefficient is
    ``a_i = W_ii / (1 - W_ii l''_i)`` with
    ``W = X Y^{-1} X' - X Y^{-1} X_V' M^{-1} X_V Y^{-1} X'``, and on ``V`` it is
    ``a_i = 1 / [M^{-1}]_ii``.  ``g`` holds loss derivatives on ``S`` and the
    least-squares subgradients on ``V``.  With an intercept, the rank-one
    corrected versions of ``M^{-1}`` and ``W`` are used.
    """
    reg, loss = spec.regularizer, spec.loss
    if not reg.smooth_hessian:
        raise UnsupportedEngineError("nonsmooth_loss needs a twice differentiable penalty")
    notes = _check_fit(fit, spec)
    x, y = data.x, data.y
    u = fit.fitted(data)
    V, S = partition_singular(loss, fit, data, tol)
    g = -dual_from_primal(spec, data, fit, tol)
    l2 = np.zeros(data.n)
    l2[S] = loss.d2(u[S], y[S])
    # subgradients on V should be interior to the one-sided derivative range
    if V.size:
        lo, hi = loss.d1_left(u[V], y[V]), loss.d1_right(u[V], y[V])
        outside = (g[V] <= lo + 1e-8) | (g[V] >= hi - 1e-8)
        if outside.any():
            notes.append(f"{int(outside.sum())} kink subgradient(s) not strictly interior")
    ymat = spec.lam * reg.hessian(fit.beta) + (x[S].T * l2[S]) @ x[S]
    cy, _ = _cholesky(ymat)
    cx = sla.solve_triangular(cy, x.T, lower=True)  # Y^{-1/2}-type factor of X'
    base = np.einsum("ij,ij->j", cx, cx)  # x_i' Y^{-1} x_i
    a_coef = np.zeros(data.n)
    if spec.intercept:
        a_int = float(np.sum(l2[S]))
        b_vec = x[S].T @ l2[S]
        cb = sla.solve_triangular(cy, b_vec, lower=True)
        xyb = cx.T @ cb  # X Y^{-1} b
        byb = float(cb @ cb)
    if V.size == 0:
        if spec.intercept:
            den = a_int - byb
            if den <= 1e-12 * max(1.0, a_int):
                raise AssumptionViolation("intercept undetermined: no kink points and no curvature")
            w = base + (1.0 - xyb) ** 2 / den
        else:
            w = base
        a_coef = w / (1.0 - w * l2)
        denom = 1.0 - w * l2
    else:
        r = cx.T @ cx[:, V]  # X Y^{-1} X_V'
        mmat = r[V]
        try:
            cm = sla.cholesky(0.5 * (mmat + mmat.T), lower=True)
        except np.linalg.LinAlgError:
            raise AssumptionViolation("X_V Y^{-1} X_V' is singular (kink rows dependent)") from None
        minv = sla.cho_solve((cm, True), np.eye(V.size))
        q = sla.solve_triangular(cm, r.T, lower=True)
        w = base - np.einsum("ij,ij->j", q, q)
        if spec.intercept:
            c = 1.0 - xyb[V]
            minv_c = minv @ c
            den = a_int - byb + float(c @ minv_c)
            if den <= 1e-12:
                raise AssumptionViolation("intercept correction denominator is not positive")
            umat = minv - np.outer(minv_c, minv_c) / den
            dvec = r @ minv_c - (1.0 - xyb)
            w = w + dvec**2 / den
            vdiag = np.diag(umat)
        else:
            vdiag = np.diag(minv)
        denom = 1.0 - w * l2
        with np.errstate(divide="ignore", invalid="ignore"):
            a_coef = w / denom
        a_coef[V] = 1.0 / vdiag
        denom[V] = 1.0
    pred = u + a_coef * g
    return _report("nonsmooth_loss", spec, data, fit, pred, a_coef, denom, V.size, d, notes)


# --- nuclear norm ------------------------------------------------------------


def nuclear_curvature(sigma: np.ndarray, g: np.ndarray, m: int, p1: int, p2: int):
    """Curvature matrix of the nuclear norm in the singular basis.

    Parameters
    ----------
    sigma : (p2,) singular values (first ``m`` nonzero, decreasing)
    g : (p2,) subgradient singular values (1 for the first ``m``)
    m : rank
    p1, p2 : matrix shape with ``p1 >= p2``

    Returns
    -------
    curv : ndarray (p1 p2, p1 p2)
        Entries indexed by ``s * p2 + t``; only the rows/columns in ``E``
        are meaningful.
    E : ndarray of int
        Indices ``(s, t)`` with ``s < m`` or ``t < m``.
    """
    idx = lambda s, t: s * p2 + t  # noqa: E731
    curv = np.zeros((p1 * p2, p1 * p2))
    for s in range(m):
        for t in range(m):
            if s != t:
                val = 1.0 / (sigma[s] + sigma[t])
                curv[idx(s, t), idx(s, t)] = val
                curv[idx(s, t), idx(t, s)] = -val
    for s in range(m):
        for t in range(m, p2):
            val = 1.0 / sigma[s]
            curv[idx(s, t), idx(s, t)] = val
            curv[idx(t, s), idx(t, s)] = val
            curv[idx(s, t), idx(t, s)] = -g[t] / sigma[s]
            curv[idx(t, s), idx(s, t)] = -g[t] / sigma[s]
    for s in range(p2, p1):
        for t in range(m):
            curv[idx(s, t), idx(s, t)] = 1.0 / sigma[t]
    E = np.array([idx(s, t) for s in range(p1) for t in range(p2) if s < m or t < m], dtype=int)
    return curv, E


def alo_nuclear(
    spec: ModelSpec, data: Dataset, fit: FitResult, d: str | None = None, tol: float | None = None
) -> AloReport:
    """Nuclear-norm matrix regression with squared loss.

    Rotates each observation into the singular bases of the fit,
    ``Xrot_j[k, l] = u_k' X_j v_l``, keeps the coordinates touching the
    first ``m`` singular directions, and uses
    ``H = Xrot_E [Xrot_E' Xrot_E + lam * C]^{-1} Xrot_E'`` with ``C`` from
    :func:`nuclear_curvature`.
    """
    reg = spec.regularizer
    if not isinstance(reg, Nuclear) or not isinstance(spec.loss, SquaredLoss):
        raise UnsupportedEngineError("nuclear engine handles squared loss with the nuclear norm")
    if spec.intercept:
        raise UnsupportedEngineError("nuclear engine does not take an intercept")
    notes = _check_fit(fit, spec)
    info = active_set(reg, fit, data, tol, spec.lam)
    ex = info.extra
    shape = reg.shape or data.matrix_shape
    xm = data.x.reshape(data.n, *shape)
    if ex["transposed"]:
        xm = np.swapaxes(xm, 1, 2)
    p1, p2 = xm.shape[1:]
    u = fit.fitted(data)
    m = ex["rank"]
    if m == 0:
        h = np.zeros(data.n)
    else:
        rot = np.einsum("ak,nab,bl->nkl", ex["u"], xm, ex["v"]).reshape(data.n, p1 * p2)
        curv, E = nuclear_curvature(ex["sigma"], ex["g"], m, p1, p2)
        xe = rot[:, E]
        inner = xe.T @ xe + spec.lam * curv[np.ix_(E, E)]
        h = hat_from_woodbury(inner, xe).h_diag
    denom = 1.0 - h
    with np.errstate(divide="ignore", invalid="ignore"):
        pred = u + h * (u - data.y) / denom
    return _report("nuclear", spec, data, fit, pred, h, denom, m, d, notes)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def select_engine(spec: ModelSpec) -> str:
    """Default engine for a model."""
    reg, loss = spec.regularizer, spec.loss
    if spec.constraint is not None:
        return "constrained"
    if isinstance(loss, HingeLoss):
        return "nonsmooth_loss"
    if isinstance(reg, Nuclear):
        return "nuclear"
    if isinstance(reg, (GeneralizedLasso, LInf, Slope)):
        return "dual"
    if isinstance(reg, Lasso):
        return "dual" if isinstance(loss, SquaredLoss) else "proximal"
    if isinstance(reg, GroupLasso):
        return "proximal"
    if reg.smooth_hessian:
        return "smooth_primal"
    raise UnsupportedEngineError(f"no engine for {loss.id} + {reg.id}")


def compute_alo(
    spec: ModelSpec,
    data: Dataset,
    fit: FitResult,
    engine: str = "auto",
    d: str | None = None,
    tol: float | None = None,
) -> AloReport:
    """ALO report for ``fit`` using ``engine`` (``"auto"`` picks one)."""
    if engine == "auto":
        engine = select_engine(spec)
    if engine == "smooth_primal":
        return alo_smooth_primal(spec, data, fit, d)
    if engine == "nonsmooth_reg":
        return alo_nonsmooth_reg(spec, data, fit, d, tol)
    if engine == "dual":
        return alo_dual(spec, data, fit, d, tol)
    if engine == "proximal":
        return alo_proximal(spec, data, fit, d)
    if engine == "constrained":
        return alo_constrained(spec, data, fit, d)
    if engine == "nonsmooth_loss":
        return alo_nonsmooth_loss(spec, data, fit, d, SINGULARITY_TOL if tol is None else tol)
    if engine == "nuclear":
        return alo_nuclear(spec, data, fit, d, tol)
    raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")
