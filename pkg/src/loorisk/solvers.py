"""First-party solvers that produce :class:`~loorisk.core.FitResult` objects.

* :func:`prox_grad_solve`  accelerated proximal gradient (FISTA with
  backtracking and monotone restarts) for smooth losses with a proximable
  regularizer;
* :func:`projected_grad_solve`  the same machinery with a projection in
  place of the prox, for smooth objectives over a convex set;
* :func:`subgradient_hinge_solve`  the ridge-penalized SVM, solved in the
  box-constrained dual by a primal-dual interior-point method;
* :func:`admm_linf_dual`  ADMM on the dual of the l_inf-penalized least
  squares problem, whose ``z`` iterate has exact zeros;
* :func:`admm_genlasso_solve`  ADMM for the generalized lasso.

Every solver finishes with a *polish*: once the iterates reveal the active
structure (support, margin set, dual face) the reduced smooth problem is
solved directly and accepted only if the full optimality check passes.  On
squared-loss problems this gives solutions exact to rounding, which the
exact leave-one-out oracle relies on.

Non-convergence is reported through ``FitResult.converged``, never raised.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .core import (
    AssumptionViolation,
    Dataset,
    FitResult,
    InvalidTaskError,
    ModelSpec,
    ShapeError,
    UnsupportedEngineError,
)
from .losses import HingeLoss, SquaredLoss, partition_singular
from .regularizers import (
    GeneralizedLasso,
    GroupLasso,
    Lasso,
    LInf,
    Ridge,
    null_space_qr,
    project_l1_ball,
    soft_threshold,
)

__all__ = [
    "SolverConfig",
    "prox_grad_solve",
    "projected_grad_solve",
    "subgradient_hinge_solve",
    "admm_linf_dual",
    "admm_genlasso_solve",
    "dual_from_primal",
    "duality_gap",
    "fit_model",
    "fit_path",
    "lambda_max",
]


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings shared by every algorithm.

    ``tol`` bounds the scaled fixed-point residual
    ``||w - P(w - s grad f(w))|| / max(1, ||w||)`` (``s = 1/L``) for the
    gradient methods and the primal/dual residuals for ADMM.
    """

    max_iter: int = 50000
    tol: float = 1e-10
    rho: float = 1.0
    seed: int = 0
    polish: bool = True
    debug: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.rho > 0:
            raise ValueError("rho must be positive")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _augmented(x: np.ndarray, intercept: bool) -> np.ndarray:
    return np.column_stack([np.ones(x.shape[0]), x]) if intercept else x


def _op_norm_sq(a: np.ndarray, seed: int = 0, iters: int = 60) -> float:
    """Largest eigenvalue of ``a'a`` by power iteration (slightly inflated)."""
    if a.size == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = a.T @ (a @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
        if abs(nrm - est) <= 1e-6 * nrm:
            est = nrm
            break
        est = nrm
    return 1.02 * est


def lambda_max(data: Dataset, reg=None) -> float:
    """Smallest penalty with an all-zero lasso solution, ``||X'y||_inf``."""
    c = data.x.T @ data.y
    if reg is None or isinstance(reg, Lasso):
        return float(np.max(np.abs(c)))
    return float(reg.dual_norm(c))


class _Composite:
    """``f(w) + g(w)`` with ``w = (intercept, beta)`` or ``w = beta``.

    ``f`` is the summed loss, plus ``lam * R`` when a constraint takes the
    role of ``g``.
    """

    def __init__(self, spec: ModelSpec, data: Dataset):
        self.spec = spec
        self.loss = spec.loss
        self.reg = spec.regularizer
        self.lam = spec.lam
        self.con = spec.constraint
        self.off = 1 if spec.intercept else 0
        self.xa = _augmented(data.x, spec.intercept)
        self.y = data.y
        self.shape = data.matrix_shape
        if getattr(self.reg, "spectral", False) and getattr(self.reg, "shape", None) is None:
            if self.shape is None:
                raise ShapeError(f"{self.reg.id} needs Dataset.matrix_shape")

    # pieces ---------------------------------------------------------------

    def beta(self, w):
        return w[self.off :]

    def f(self, w):
        val = float(np.sum(self.loss.value(self.xa @ w, self.y)))
        if self.con is not None:
            val += self.lam * self.reg.value(self.beta(w))
        return val

    def grad(self, w):
        u = self.xa @ w
        g = self.xa.T @ self.loss.d1(u, self.y)
        if self.con is not None:
            g[self.off :] += self.lam * self.reg.grad(self.beta(w))
        return g

    def f_grad(self, w):
        u = self.xa @ w
        val = float(np.sum(self.loss.value(u, self.y)))
        g = self.xa.T @ self.loss.d1(u, self.y)
        if self.con is not None:
            b = self.beta(w)
            val += self.lam * self.reg.value(b)
            g[self.off :] += self.lam * self.reg.grad(b)
        return val, g

    def _reg_prox(self, z, t):
        if getattr(self.reg, "spectral", False) and getattr(self.reg, "shape", None) is None:
            return self.reg.prox(z, t, shape=self.shape)
        return self.reg.prox(z, t)

    def g(self, w):
        if self.con is not None:
            return 0.0
        return self.lam * _reg_value(self.reg, self.beta(w), self.shape)

    def objective(self, w):
        return self.f(w) + self.g(w)

    def prox(self, w, s):
        out = w.copy()
        if self.con is not None:
            out[self.off :] = self.con.project(w[self.off :])
        else:
            out[self.off :] = self._reg_prox(w[self.off :], s * self.lam)
        return out

    def residual(self, w, s):
        step = self.prox(w - s * self.grad(w), s)
        return float(np.linalg.norm(w - step) / max(1.0, np.linalg.norm(w)))

    def lipschitz(self, seed):
        curv = 1.0 if isinstance(self.loss, SquaredLoss) else 0.25
        lip = curv * _op_norm_sq(self.xa, seed)
        if self.con is not None:
            lip += 2.0 * self.lam  # smooth regularizers shipped here are quadratic
        return max(lip, 1e-12)

    # polish -----------------------------------------------------------------

    def free_set(self, w) -> np.ndarray | None:
        """Coordinates on which the problem is locally smooth and unconstrained."""
        b = self.beta(w)
        head = np.arange(self.off)
        reg = self.reg
        if self.con is not None:
            if self.con.id != "positive_orthant":
                return None
            return np.concatenate([head, self.off + np.flatnonzero(b > 0)])
        if isinstance(reg, Ridge):
            return np.arange(w.size)
        if isinstance(reg, Lasso):
            return np.concatenate([head, self.off + np.flatnonzero(b != 0)])
        if isinstance(reg, GroupLasso):
            act = reg.active_groups(b, tol=0.0)
            idx = np.concatenate([reg.groups[l] for l in act]) if act else np.array([], dtype=int)
            return np.concatenate([head, self.off + np.sort(idx)])
        return None

    def _restricted(self, wf, free, signs):
        """Objective, gradient and Hessian of the smooth problem on ``free``."""
        xf = self.xa[:, free]
        u = xf @ wf
        val = float(np.sum(self.loss.value(u, self.y)))
        g = xf.T @ self.loss.d1(u, self.y)
        h = (xf.T * self.loss.d2(u, self.y)) @ xf
        bmask = free >= self.off
        bidx = free[bmask] - self.off
        bvals = wf[bmask]
        reg, lam = self.reg, self.lam
        if isinstance(reg, Ridge):
            val += lam * float(bvals @ bvals)
            g[bmask] += 2 * lam * bvals
            h[np.ix_(bmask, bmask)] += 2 * lam * np.eye(bmask.sum())
        elif isinstance(reg, Lasso):
            val += lam * float(signs @ bvals)
            g[bmask] += lam * signs
        elif isinstance(reg, GroupLasso):
            full = np.zeros(reg.p)
            full[bidx] = bvals
            val += lam * reg.value(full)
            g[bmask] += lam * reg.grad_active(full)[bidx]
            h[np.ix_(bmask, bmask)] += lam * reg.hessian(full)[np.ix_(bidx, bidx)]
        return val, g, h

    def polish(self, w) -> np.ndarray | None:
        """Newton's method on the locally smooth reduced problem."""
        free = self.free_set(w)
        if free is None:
            return None
        if free.size == 0:
            return np.zeros_like(w)
        wf = w[free].copy()
        bmask = free >= self.off
        signs = np.sign(wf[bmask]) if isinstance(self.reg, Lasso) else None
        groups = None
        if isinstance(self.reg, GroupLasso):
            pos = {j: k for k, j in enumerate(free[bmask] - self.off)}
            groups = [
                np.array([pos[j] for j in self.reg.groups[l]])
                for l in self.reg.active_groups(self.beta(w), tol=0.0)
            ]
        quadratic = isinstance(self.loss, SquaredLoss) and groups is None
        for _ in range(50):
            val, g, h = self._restricted(wf, free, signs)
            try:
                c = sla.cho_factor(h + 1e-14 * np.trace(h) / h.shape[0] * np.eye(h.shape[0]))
                step = sla.cho_solve(c, g)
            except (np.linalg.LinAlgError, ValueError):
                return None
            dec = float(g @ step)
            t = 1.0
            if not quadratic:
                while t > 1e-10:
                    cand = wf - t * step
                    # group norms must stay away from the kink at the origin
                    ok = groups is None or all(
                        np.linalg.norm(cand[bmask][gi]) > 0 for gi in groups
                    )
                    if ok and self._restricted(cand, free, signs)[0] <= val - 1e-4 * t * dec:
                        break
                    t *= 0.5
            wf = wf - t * step
            small = np.linalg.norm(t * step) <= 1e-15 * (1 + np.linalg.norm(wf))
            if quadratic or dec <= 1e-28 * max(1.0, abs(val)) or small:
                break
        out = np.zeros_like(w)
        out[free] = wf
        return out


def _support_key(prob: _Composite, w) -> bytes:
    b = prob.beta(w)
    if isinstance(prob.reg, GroupLasso):
        return bytes(np.array([np.any(b[g] != 0) for g in prob.reg.groups], dtype=np.uint8))
    if prob.con is not None:
        return (b > 0).tobytes()
    return np.sign(b).astype(np.int8).tobytes()


def _finish(prob: _Composite, data: Dataset, w, it, res, converged, aux=None) -> FitResult:
    b0 = float(w[0]) if prob.off else None
    beta = w[prob.off :].copy()
    u = prob.xa @ w
    theta = -prob.loss.d1(u, prob.y)
    return FitResult(
        beta=beta,
        intercept_value=b0,
        theta=theta,
        objective=prob.objective(w),
        iterations=int(it),
        grad_norm=float(res),
        converged=bool(converged),
        lam=prob.lam,
        aux=aux or {},
    )


def _start(prob: _Composite, data: Dataset, warm: FitResult | None) -> np.ndarray:
    w = np.zeros(prob.xa.shape[1])
    if warm is not None:
        w[prob.off :] = warm.beta
        if prob.off and warm.intercept_value is not None:
            w[0] = warm.intercept_value
    if prob.con is not None:
        w = prob.prox(w, 1.0)
    return w


def _fista(prob: _Composite, data: Dataset, cfg: SolverConfig, warm: FitResult | None) -> FitResult:
    lip = prob.lipschitz(cfg.seed)
    x = _start(prob, data, warm)
    s = 1.0 / lip
    tol = cfg.tol
    can_polish = cfg.polish and prob.free_set(x) is not None

    def try_polish(ref):
        cand = prob.polish(ref)
        if cand is None:
            return None
        res = prob.residual(cand, s)
        if res <= tol and prob.objective(cand) <= prob.objective(ref) + 1e-12 * max(1.0, abs(prob.objective(ref))):
            return cand, res
        return None

    # a smooth problem with no active-set structure needs no first-order phase
    smooth = isinstance(prob.reg, Ridge) and prob.con is None
    if can_polish and (warm is not None or smooth):
        got = try_polish(x)
        if got is not None:
            return _finish(prob, data, got[0], 0, got[1], True, {"polished": True})

    fx = prob.objective(x)
    y, t = x.copy(), 1.0
    last_key, stable, attempts, tried = None, 0, 0, set()
    res = np.inf
    it, plain = 0, False
    for it in range(1, cfg.max_iter + 1):
        fy, gy = prob.f_grad(y)
        while True:
            x_new = prob.prox(y - gy / lip, 1.0 / lip)
            d = x_new - y
            f_new = prob.f(x_new)
            if f_new <= fy + gy @ d + 0.5 * lip * (d @ d) + 1e-12 * max(1.0, abs(fy)):
                break
            lip *= 2.0
        s = 1.0 / lip
        obj_new = f_new + prob.g(x_new)
        if obj_new > fx and not plain:
            # momentum overshot; restart from the last accepted point
            if t > 1.0:
                y, t = x.copy(), 1.0
                continue
            # a plain step did not decrease the objective: we are at the
            # roundoff floor, keep iterating unaccelerated fixed-point steps
            plain = True
        if plain:
            step_norm = np.linalg.norm(x_new - x)
            x, fx, y = x_new, obj_new, x_new.copy()
            if step_norm <= tol * max(1.0, np.linalg.norm(x)) or it % 10 == 0:
                res = prob.residual(x, s)
                if res <= tol:
                    got = try_polish(x) if can_polish else None
                    if got is not None:
                        return _finish(prob, data, got[0], it, got[1], True, {"polished": True})
                    return _finish(prob, data, x, it, res, True, {"polished": False})
            continue
        if cfg.debug:
            assert obj_new <= fx + 1e-12 * max(1.0, abs(fx))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        step_norm = np.linalg.norm(x_new - x)
        x, fx, t = x_new, obj_new, t_new

        if can_polish:
            key = _support_key(prob, x)
            stable = stable + 1 if key == last_key else 0
            last_key = key
            if stable >= 20 and key not in tried and attempts < 25:
                tried.add(key)
                attempts += 1
                got = try_polish(x)
                if got is not None:
                    return _finish(prob, data, got[0], it, got[1], True, {"polished": True})
        if it % 10 == 0 or step_norm <= tol * max(1.0, np.linalg.norm(x)):
            res = prob.residual(x, s)
            if res <= tol:
                # a final polish removes the remaining first-order error
                got = try_polish(x) if can_polish else None
                if got is not None:
                    return _finish(prob, data, got[0], it, got[1], True, {"polished": True})
                return _finish(prob, data, x, it, res, True, {"polished": False})
    res = prob.residual(x, s)
    return _finish(prob, data, x, it, res, res <= tol, {"polished": False})


# ---------------------------------------------------------------------------
# public solvers
# ---------------------------------------------------------------------------


def prox_grad_solve(
    spec: ModelSpec, data: Dataset, cfg: SolverConfig | None = None, warm: FitResult | None = None
) -> FitResult:
    """Minimize ``sum loss + lam * R`` by accelerated proximal gradient.

    Parameters
    ----------
    spec : ModelSpec
        Smooth loss; regularizer with a proximal map; no constraint.
    data : Dataset
    cfg : SolverConfig, optional
    warm : FitResult, optional
        Starting point (e.g. the solution at a neighbouring penalty).
    """
    cfg = cfg or SolverConfig()
    if not spec.loss.smooth:
        raise UnsupportedEngineError("prox_grad_solve needs a smooth loss")
    if spec.constraint is not None:
        raise UnsupportedEngineError("use projected_grad_solve for constrained problems")
    if isinstance(spec.regularizer, GeneralizedLasso):
        raise UnsupportedEngineError("use admm_genlasso_solve for the generalized lasso")
    return _fista(_Composite(spec, data), data, cfg, warm)


def projected_grad_solve(
    spec: ModelSpec, data: Dataset, cfg: SolverConfig | None = None, warm: FitResult | None = None
) -> FitResult:
    """Minimize a smooth ``sum loss + lam * R`` over ``spec.constraint``."""
    cfg = cfg or SolverConfig()
    if spec.constraint is None:
        raise UnsupportedEngineError("projected_grad_solve needs a constraint")
    if not (spec.loss.smooth and spec.regularizer.smooth_hessian):
        raise UnsupportedEngineError("projected_grad_solve needs a smooth loss and regularizer")
    return _fista(_Composite(spec, data), data, cfg, warm)


# --- SVM ---------------------------------------------------------------------


def _svm_kkt(x, y, lam, upper, free, intercept):
    """Solve the KKT system given the bound (``alpha = 1``) and margin sets."""
    n = y.size
    V = np.flatnonzero(free)
    L = np.flatnonzero(upper)
    lower = ~(upper | free)
    yx = x * y[:, None]
    base = yx[L].sum(axis=0)
    q_vv = (yx[V] @ yx[V].T) / (2.0 * lam)
    rhs = 1.0 - (yx[V] @ base) / (2.0 * lam)
    if intercept:
        k = V.size
        if k == 0:
            return None
        a = np.zeros((k + 1, k + 1))
        a[:k, :k] = q_vv
        a[:k, k] = y[V]
        a[k, :k] = y[V]
        b = np.concatenate([rhs, [-y[L].sum()]])
        sol, *_ = np.linalg.lstsq(a, b, rcond=None)
        if np.linalg.norm(a @ sol - b) > 1e-9 * max(1.0, np.linalg.norm(b)):
            return None
        a_v, b0 = sol[:k], sol[k]
    else:
        if V.size:
            a_v, *_ = np.linalg.lstsq(q_vv, rhs, rcond=None)
            if np.linalg.norm(q_vv @ a_v - rhs) > 1e-9 * max(1.0, np.linalg.norm(rhs)):
                return None
        else:
            a_v = np.zeros(0)
        b0 = 0.0
    if np.any(a_v < -1e-12) or np.any(a_v > 1 + 1e-12):
        return None
    alpha_new = np.zeros(n)
    alpha_new[L] = 1.0
    alpha_new[V] = np.clip(a_v, 0.0, 1.0)
    w = (x.T @ (alpha_new * y)) / (2.0 * lam)
    m = y * (x @ w + b0)
    if np.any(m[L] > 1 + 1e-9) or np.any(m[lower] < 1 - 1e-9):
        return None
    return alpha_new, w, b0


def _svm_polish(x, y, lam, alpha=None, intercept=False, w=None, b0=0.0, tol_bound=1e-9):
    """Exact solution from a guessed margin set.

    Guesses come from the box pattern of ``alpha`` and from the margins
    ``y (x'w + b0)`` at several tolerances (``w`` defaults to the primal
    point of ``alpha``).  The first guess whose KKT system is consistent
    wins.
    """
    guesses = []
    if alpha is not None:
        upper = alpha >= 1.0 - tol_bound
        lower = alpha <= tol_bound
        guesses.append((upper, ~(upper | lower)))
        if w is None:
            w = (x.T @ (alpha * y)) / (2.0 * lam)
            free = ~(upper | lower)
            if intercept and free.any():
                b0 = float(np.mean(y[free] - x[free] @ w))
    if w is not None:
        m = y * (x @ w + b0)
        for tol in (1e-8, 1e-6, 1e-4, 1e-3, 1e-2):
            guesses.append((m < 1 - tol, np.abs(m - 1) <= tol))
    for upper, free in guesses:
        got = _svm_kkt(x, y, lam, upper, free, intercept)
        if got is not None:
            return got
    return None


def _svm_objectives(x, y, lam, alpha, w, b0):
    primal = float(np.sum(np.maximum(0.0, 1 - y * (x @ w + b0))) + lam * w @ w)
    dual = float(alpha.sum() - lam * w @ w)
    return primal, dual


def subgradient_hinge_solve(
    spec: ModelSpec, data: Dataset, cfg: SolverConfig | None = None, warm: FitResult | None = None
) -> FitResult:
    """Ridge-penalized hinge loss ``sum (1 - y_j u_j)_+ + lam ||beta||^2``.

    Works on the box-constrained dual
    ``max sum(alpha) - ||sum alpha_j y_j x_j||^2 / (4 lam)``, ``0 <= alpha <= 1``
    (plus ``sum alpha_j y_j = 0`` with an intercept) with a primal-dual
    interior-point method.  The margin set read off ``alpha`` is then
    polished by solving its KKT linear system.  A warm start on the same
    rows is polished directly; on different rows (held-out refits) the
    margins of the warm coefficients suggest the set.  Convergence means a
    duality gap at most ``1e-6 * n``.
    """
    cfg = cfg or SolverConfig()
    if not isinstance(spec.loss, HingeLoss) or not isinstance(spec.regularizer, Ridge):
        raise UnsupportedEngineError("subgradient_hinge_solve handles hinge loss with ridge only")
    if data.kind != "binary":
        raise InvalidTaskError("the SVM needs binary labels")
    x, y, lam = data.x, data.y, spec.lam
    n = data.n
    alpha = np.zeros(n)
    if warm is not None and "alpha" in warm.aux and len(warm.aux["alpha"]) == n:
        alpha = np.clip(np.asarray(warm.aux["alpha"], dtype=float), 0.0, 1.0)
    gap_tol = 1e-6 * n
    yx = x * y[:, None]

    def done(alpha_p, w, b0, it, polished):
        primal, dual = _svm_objectives(x, y, lam, alpha_p, w, b0)
        gap = primal - dual
        return FitResult(
            beta=w,
            intercept_value=float(b0) if spec.intercept else None,
            theta=y * alpha_p,
            objective=primal,
            iterations=it,
            grad_norm=max(gap, 0.0) / n,
            converged=gap <= gap_tol,
            lam=lam,
            aux={"alpha": alpha_p, "gap": gap, "polished": polished},
        )

    if cfg.polish and warm is not None:
        if "alpha" in warm.aux and len(warm.aux["alpha"]) == n:
            got = _svm_polish(x, y, lam, alpha, spec.intercept)
        else:
            # different rows (e.g. a held-out refit): read the margins of the warm point
            got = _svm_polish(x, y, lam, None, spec.intercept, warm.beta, warm.intercept_value or 0.0)
        if got is not None:
            return done(got[0], got[1], got[2], 0, True)

    q = (yx @ yx.T) / (2.0 * lam)
    alpha, b0, it = _svm_dual_ipm(q, y, spec.intercept, cfg.max_iter)
    if cfg.polish:
        got = _svm_polish(x, y, lam, alpha, spec.intercept)
        if got is not None:
            return done(got[0], got[1], got[2], it, True)
    w = (yx.T @ alpha) / (2.0 * lam)
    return done(alpha, w, b0 if spec.intercept else 0.0, it, False)


def _svm_dual_ipm(q, y, intercept, max_iter=200, tol=1e-13):
    """Mehrotra predictor-corrector for ``min a'Qa/2 - 1'a, 0 <= a <= 1`` (``y'a = 0``).

    Returns ``(alpha, nu, iterations)``; with an intercept ``nu`` is the
    intercept of the primal solution.
    """
    n = y.size
    alpha = np.full(n, 0.5)
    z0 = np.ones(n)
    z1 = np.ones(n)
    nu = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(q)))))
    it = 0

    def solve(k, r, rp):
        if not intercept:
            # the barrier system is ill-conditioned near the solution by design
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                return sla.solve(k, r, assume_a="pos"), 0.0
        m = np.zeros((n + 1, n + 1))
        m[:n, :n] = k
        m[:n, n] = y
        m[n, :n] = y
        sol = np.linalg.solve(m, np.concatenate([r, [-rp]]))
        return sol[:n], sol[n]

    def max_step(v, dv):
        neg = dv < 0
        return min(1.0, float(np.min(-v[neg] / dv[neg]))) if neg.any() else 1.0

    for it in range(1, min(max_iter, 500) + 1):
        up = 1.0 - alpha
        rd = q @ alpha - 1.0 - z0 + z1 + (y * nu if intercept else 0.0)
        rp = float(y @ alpha) if intercept else 0.0
        mu = float(alpha @ z0 + up @ z1) / (2 * n)
        if np.max(np.abs(rd)) <= tol * scale and abs(rp) <= tol * n and mu <= tol:
            break
        if mu <= 1e-3 * tol or np.min(alpha) <= 0.0 or np.min(up) <= 0.0:
            # at the roundoff floor
            break
        k = q + np.diag(z0 / alpha + z1 / up)

        def direction(c0, c1):
            r = -rd + c0 / alpha - c1 / up
            da, dnu = solve(k, r, rp)
            dz0 = (c0 - z0 * da) / alpha
            dz1 = (c1 + z1 * da) / up
            return da, dnu, dz0, dz1

        da, dnu, dz0, dz1 = direction(-alpha * z0, -up * z1)
        sp = min(max_step(alpha, da), max_step(up, -da))
        sd = min(max_step(z0, dz0), max_step(z1, dz1))
        mu_aff = float((alpha + sp * da) @ (z0 + sd * dz0) + (up - sp * da) @ (z1 + sd * dz1)) / (2 * n)
        sigma = (mu_aff / mu) ** 3
        c0 = sigma * mu - alpha * z0 - da * dz0
        c1 = sigma * mu - up * z1 + da * dz1
        da, dnu, dz0, dz1 = direction(c0, c1)
        sp = 0.995 * min(max_step(alpha, da), max_step(up, -da))
        sd = 0.995 * min(max_step(z0, dz0), max_step(z1, dz1))
        alpha = alpha + sp * da
        nu = nu + sd * dnu
        z0 = z0 + sd * dz0
        z1 = z1 + sd * dz1
    return np.clip(alpha, 0.0, 1.0), nu, it


# --- ADMM: l_inf -------------------------------------------------------------


def _linf_polish(x, y, lam, z):
    """Exact solution on the face read from the zero pattern of ``z``."""
    E = np.flatnonzero(z == 0)
    rest = np.flatnonzero(z != 0)
    if rest.size == 0:
        return None
    s = np.sign(z)
    W = np.column_stack([x[:, E], x[:, rest] @ s[rest]])
    gram = W.T @ W
    rhs = W.T @ y
    rhs[-1] -= lam
    try:
        sol = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return None
    t = sol[-1]
    beta = np.empty(x.shape[1])
    beta[E] = sol[:-1]
    beta[rest] = s[rest] * t
    if not (t > 0) or (E.size and np.max(np.abs(beta[E])) >= t):
        return None
    theta = y - x @ beta
    zz = x.T @ theta
    if np.any(np.sign(zz[rest]) != s[rest]):
        return None
    zz[E] = 0.0
    return beta, theta, zz


def admm_linf_dual(
    spec: ModelSpec, data: Dataset, cfg: SolverConfig | None = None, warm: FitResult | None = None
) -> tuple[FitResult, np.ndarray]:
    """l_inf-penalized least squares through ADMM on its dual.

    The dual is ``min 0.5 ||y - u||^2`` subject to ``||X'u||_1 <= lam``; with
    the split ``z = X'u`` the ``z``-update is a projection onto the l1 ball,
    so ``z`` has exact zeros on the coordinates where ``|beta_j|`` is below
    ``||beta||_inf``.  The primal is recovered on that face.

    Returns
    -------
    fit : FitResult
    z_hat : ndarray
        ``X' theta`` with exact zeros.
    """
    cfg = cfg or SolverConfig()
    if not isinstance(spec.loss, SquaredLoss) or not isinstance(spec.regularizer, LInf):
        raise UnsupportedEngineError("admm_linf_dual handles squared loss with l_inf only")
    if spec.intercept:
        raise UnsupportedEngineError("admm_linf_dual does not fit an intercept; center the data")
    x, y, lam = data.x, data.y, spec.lam
    n, p = x.shape

    def done(beta, theta, z, it, res, ok, polished):
        obj = 0.5 * float(np.sum((y - x @ beta) ** 2)) + lam * float(np.max(np.abs(beta)))
        fit = FitResult(
            beta=beta,
            intercept_value=None,
            theta=theta,
            objective=obj,
            iterations=it,
            grad_norm=res,
            converged=ok,
            lam=lam,
            aux={"z_hat": z, "admm": state, "polished": polished},
        )
        return fit, z

    state = None
    if np.abs(x.T @ y).sum() <= lam:
        z = x.T @ y
        return done(np.zeros(p), y.copy(), z, 0, 0.0, True, True)

    rho = cfg.rho / max(_op_norm_sq(x, cfg.seed), 1e-12)
    chol = sla.cho_factor(np.eye(n) + rho * (x @ x.T))
    u = y.copy()
    z = project_l1_ball(x.T @ u, lam)
    mu = np.zeros(p)
    if warm is not None and warm.aux.get("admm") is not None:
        u0, z0, mu0, rho0 = warm.aux["admm"]
        if z0.shape == (p,):
            z, mu = project_l1_ball(z0, lam), mu0 * (rho / rho0)
            if u0.shape == (n,):
                u = u0.copy()
    if cfg.polish and warm is not None:
        got = _linf_polish(x, y, lam, z)
        if got is not None:
            state = (u, z, mu, rho)
            return done(*got, 0, 0.0, True, True)
    last_pattern, it, res = None, 0, np.inf
    scale = max(1.0, np.linalg.norm(y))
    for it in range(1, cfg.max_iter + 1):
        u = sla.cho_solve(chol, y + rho * (x @ z) - x @ mu)
        xu = x.T @ u
        z_old = z
        z = project_l1_ball(xu + mu / rho, lam)
        mu = mu + rho * (xu - z)
        r_primal = np.linalg.norm(xu - z)
        r_dual = rho * np.linalg.norm(x @ (z - z_old))
        res = max(r_primal, r_dual) / scale
        pattern = (z == 0).tobytes()
        if cfg.polish and pattern == last_pattern and it % 10 == 0:
            got = _linf_polish(x, y, lam, z)
            if got is not None:
                state = (u, z, mu, rho)
                return done(*got, it, 0.0, True, True)
        last_pattern = pattern
        if res <= cfg.tol:
            break
    state = (u, z, mu, rho)
    got = _linf_polish(x, y, lam, z)
    if got is not None:
        return done(*got, it, res, True, True)
    # fall back to the face least squares without the validity checks
    beta = np.linalg.lstsq(x, y - u, rcond=None)[0]
    return done(beta, u, z, it, res, res <= cfg.tol, False)


# --- ADMM: generalized lasso -------------------------------------------------


def _genlasso_polish(x, y, lam, D, z):
    zero = z == 0
    nz = ~zero
    s = np.sign(z[nz])
    B = null_space_qr(D[zero])
    if B.shape[1] == 0:
        beta = np.zeros(x.shape[1])
    else:
        a = x @ B
        gram = a.T @ a
        rhs = B.T @ (x.T @ y - lam * D[nz].T @ s)
        try:
            c = sla.cho_factor(gram)
        except np.linalg.LinAlgError:
            return None
        beta = B @ sla.cho_solve(c, rhs)
    d_beta = D @ beta
    if np.any(np.sign(d_beta[nz]) != s) or np.any(d_beta[nz] == 0):
        return None
    theta = y - x @ beta
    target = x.T @ theta - lam * D[nz].T @ s
    u = np.zeros(D.shape[0])
    u[nz] = lam * s
    if zero.any():
        u0, *_ = np.linalg.lstsq(D[zero].T, target, rcond=None)
        if np.linalg.norm(D[zero].T @ u0 - target) > 1e-8 * max(1.0, np.linalg.norm(x.T @ theta)):
            return None
        if np.any(np.abs(u0) > lam * (1 + 1e-9)):
            return None
        u[zero] = u0
    elif np.linalg.norm(target) > 1e-8 * max(1.0, np.linalg.norm(x.T @ theta)):
        return None
    return beta, theta, u


def admm_genlasso_solve(
    spec: ModelSpec, data: Dataset, cfg: SolverConfig | None = None, warm: FitResult | None = None
) -> FitResult:
    """Generalized lasso ``0.5 ||y - X beta||^2 + lam ||D beta||_1`` by ADMM.

    Splits ``z = D beta``; the soft-threshold ``z``-update exposes the rows
    with ``(D beta)_i = 0``, on which the problem is solved exactly.  The
    dual vector ``u`` (with ``D'u = X'theta``, ``|u| <= lam``) is returned as
    ``aux["u_hat"]``.
    """
    cfg = cfg or SolverConfig()
    reg = spec.regularizer
    if not isinstance(spec.loss, SquaredLoss) or not isinstance(reg, GeneralizedLasso):
        raise UnsupportedEngineError("admm_genlasso_solve handles squared loss with gen_lasso only")
    if spec.intercept:
        raise UnsupportedEngineError("admm_genlasso_solve does not fit an intercept; center the data")
    x, y, lam, D = data.x, data.y, spec.lam, reg.D
    p = x.shape[1]

    def done(beta, theta, u, z, it, res, ok, polished, state):
        obj = 0.5 * float(np.sum((y - x @ beta) ** 2)) + lam * float(np.abs(D @ beta).sum())
        return FitResult(
            beta=beta,
            intercept_value=None,
            theta=theta,
            objective=obj,
            iterations=it,
            grad_norm=res,
            converged=ok,
            lam=lam,
            aux={"u_hat": u, "z": z, "admm": state, "polished": polished},
        )

    xtx = x.T @ x
    dtd = D.T @ D
    rho = cfg.rho * max(np.trace(xtx) / p, 1e-12) / max(np.trace(dtd) / p, 1e-12)
    mat = xtx + rho * dtd
    mat += 1e-12 * np.trace(mat) / p * np.eye(p)
    chol = sla.cho_factor(mat)
    xty = x.T @ y
    beta = np.zeros(p)
    z = np.zeros(D.shape[0])
    w = np.zeros(D.shape[0])
    if warm is not None:
        st = warm.aux.get("admm")
        if st is not None and st[0].shape == (p,):
            beta, z, w = st[0].copy(), st[1].copy(), st[2] * (st[3] / rho)
        else:
            beta = warm.beta.copy()
            z = D @ beta
        if cfg.polish:
            got = _genlasso_polish(x, y, lam, D, soft_threshold(D @ beta + w, lam / rho))
            if got is not None:
                return done(*got, D @ got[0], 0, 0.0, True, True, (got[0], D @ got[0], got[2] / rho, rho))
    last_pattern, it, res = None, 0, np.inf
    scale = max(1.0, np.linalg.norm(xty))
    for it in range(1, cfg.max_iter + 1):
        beta = sla.cho_solve(chol, xty + rho * D.T @ (z - w))
        db = D @ beta
        z_old = z
        z = soft_threshold(db + w, lam / rho)
        w = w + db - z
        r_primal = np.linalg.norm(db - z)
        r_dual = rho * np.linalg.norm(D.T @ (z - z_old))
        res = max(r_primal * rho, r_dual) / scale
        pattern = (z == 0).tobytes()
        if cfg.polish and pattern == last_pattern and it % 10 == 0:
            got = _genlasso_polish(x, y, lam, D, z)
            if got is not None:
                return done(*got, D @ got[0], it, 0.0, True, True, (got[0], D @ got[0], got[2] / rho, rho))
        last_pattern = pattern
        if res <= cfg.tol:
            break
    got = _genlasso_polish(x, y, lam, D, z)
    if got is not None:
        return done(*got, D @ got[0], it, res, True, True, (got[0], D @ got[0], got[2] / rho, rho))
    theta = y - x @ beta
    return done(beta, theta, rho * w, z, it, res, res <= cfg.tol, False, (beta, z, w, rho))


# ---------------------------------------------------------------------------
# duals, gaps, dispatch
# ---------------------------------------------------------------------------


def dual_from_primal(spec: ModelSpec, data: Dataset, fit: FitResult, tol: float = 1e-5) -> np.ndarray:
    """Dual vector ``theta`` with ``-theta_j`` a subgradient of the loss.

    Smooth losses give ``theta_j = -loss'(u_j)``.  For the hinge loss the
    subgradients at kink observations are recovered from stationarity by
    least squares.
    """
    loss = spec.loss
    u = fit.fitted(data)
    if loss.smooth:
        return -loss.d1(u, data.y)
    V, S = partition_singular(loss, fit, data, tol)
    g = np.zeros(data.n)
    g[S] = loss.d1(u[S], data.y[S])
    if V.size:
        g[V] = _kink_subgradients(spec, data, fit, V, S, g[S])
    return -g


def _kink_subgradients(spec, data, fit, V, S, g_s):
    """Least-squares subgradients on the kink set from the stationarity equation."""
    x = data.x
    xv = x[V]
    if np.linalg.matrix_rank(xv) < V.size:
        raise AssumptionViolation("kink-set rows are linearly dependent (X_V X_V' singular)")
    rhs = -(spec.lam * spec.regularizer.grad(fit.beta) + x[S].T @ g_s)
    a = xv.T
    if spec.intercept:
        a = np.vstack([np.ones(V.size), a])
        rhs = np.concatenate([[-g_s.sum()], rhs])
    g_v, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    return g_v


def duality_gap(spec: ModelSpec, data: Dataset, fit: FitResult) -> float:
    """Primal objective minus the best dual objective at a feasible rescaling of ``theta``.

    Supported for squared loss (every shipped regularizer except gen_lasso,
    which uses the solver's dual vector) and for the SVM.
    """
    if isinstance(spec.loss, HingeLoss):
        return float(fit.aux["gap"])
    if not isinstance(spec.loss, SquaredLoss):
        raise UnsupportedEngineError("duality_gap needs squared or hinge loss")
    y, lam, reg = data.y, spec.lam, spec.regularizer
    resid = y - fit.fitted(data)
    primal = 0.5 * float(resid @ resid) + lam * _reg_value(reg, fit.beta, data.matrix_shape)
    theta = resid
    if spec.intercept:
        theta = theta - theta.mean()
    if isinstance(reg, GeneralizedLasso):
        u = fit.aux["u_hat"]
        if np.linalg.norm(reg.D.T @ u - data.x.T @ theta) > 1e-6 * max(1.0, np.linalg.norm(data.x.T @ theta)):
            return np.inf
        conj = 0.0 if np.max(np.abs(u)) <= lam * (1 + 1e-9) else np.inf
    else:
        v = data.x.T @ theta
        if reg.smooth_hessian:
            conj = reg.conjugate(v, lam)
        else:
            dn = reg.dual_norm(v, shape=data.matrix_shape) if reg.id == "nuclear" else reg.dual_norm(v)
            if dn > lam:
                theta = theta * (lam / dn)
            conj = 0.0
    dual = 0.5 * float(y @ y) - 0.5 * float((y - theta) @ (y - theta)) - conj
    return primal - dual


def _reg_value(reg, beta, shape=None):
    if reg.id == "nuclear":
        return reg.value(beta, shape=reg.shape or shape)
    return reg.value(beta)


def fit_model(
    spec: ModelSpec, data: Dataset, cfg: SolverConfig | None = None, warm: FitResult | None = None
) -> FitResult:
    """Fit ``spec`` on ``data`` with the appropriate solver."""
    reg, loss = spec.regularizer, spec.loss
    if isinstance(loss, HingeLoss):
        return subgradient_hinge_solve(spec, data, cfg, warm)
    if spec.constraint is not None:
        return projected_grad_solve(spec, data, cfg, warm)
    if isinstance(reg, LInf):
        return admm_linf_dual(spec, data, cfg, warm)[0]
    if isinstance(reg, GeneralizedLasso):
        return admm_genlasso_solve(spec, data, cfg, warm)
    return prox_grad_solve(spec, data, cfg, warm)


def fit_path(
    spec: ModelSpec, data: Dataset, lambdas: Sequence[float], cfg: SolverConfig | None = None
) -> list[FitResult]:
    """Fits along ``lambdas`` (visited in decreasing order, warm-started).

    Results are returned in the order of ``lambdas``.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    order = np.argsort(-lambdas, kind="stable")
    fits: list[FitResult | None] = [None] * lambdas.size
    warm = None
    for k in order:
        warm = fit_model(spec.with_lambda(lambdas[k]), data, cfg, warm)
        fits[k] = warm
    return fits  # type: ignore[return-value]

