"""Reference risk estimates by refitting: exact leave-one-out and k-fold CV.

Each held-out fit is warm-started from the full-data fit; refits are
independent and can run on a thread pool (``n_jobs``), with results merged
by observation index so the output never depends on completion order.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Dataset, FitResult, ModelSpec, default_error_fn, eval_risk
from .solvers import SolverConfig, fit_model, fit_path

__all__ = ["CvPlan", "CvResult", "make_plan", "cross_validate", "exact_loocv", "kfold_cv", "cv_path"]


@dataclass(frozen=True)
class CvPlan:
    """Held-out index sets.  ``mode`` is ``"loocv"`` or ``"kfold"``."""

    mode: str
    folds: tuple[np.ndarray, ...]
    n: int
    k: int
    seed: int | None = None

    def __post_init__(self):
        seen = np.sort(np.concatenate(self.folds)) if self.folds else np.array([], dtype=int)
        if not np.array_equal(seen, np.arange(self.n)):
            raise ValueError("folds must partition range(n)")
        if self.mode == "loocv" and any(len(f) != 1 for f in self.folds):
            raise ValueError("a leave-one-out plan has singleton folds")

    def describe(self) -> dict:
        return {"mode": self.mode, "k": self.k, "seed": self.seed, "folds": [f.tolist() for f in self.folds]}


def make_plan(n: int, mode: str = "loocv", k: int | None = None, seed: int = 0) -> CvPlan:
    """Leave-one-out plan, or k folds from a seeded shuffle cut into contiguous blocks."""
    if n < 2:
        raise ValueError("cross-validation needs n >= 2")
    if mode == "loocv":
        return CvPlan("loocv", tuple(np.array([i]) for i in range(n)), n, n)
    if mode != "kfold":
        raise ValueError(f"unknown mode {mode!r}")
    if k is None or not 2 <= k <= n:
        raise ValueError(f"k must satisfy 2 <= k <= n, got {k}")
    perm = np.random.Generator(np.random.Philox(seed)).permutation(n)
    return CvPlan("kfold", tuple(np.sort(b) for b in np.array_split(perm, k)), n, k, seed)


@dataclass(frozen=True)
class CvResult:
    """Out-of-fold predictions and their risk for one penalty level."""

    predictions: np.ndarray
    risk: float
    lam: float
    error_fn: str
    plan: CvPlan
    seconds: float
    flagged: tuple[int, ...] = ()
    warnings: tuple[str, ...] = field(default_factory=tuple)


def _refit(spec, data, fold, cfg, warm):
    keep = np.setdiff1d(np.arange(data.n), fold, assume_unique=True)
    fit = fit_model(spec, data.subset(keep), cfg, warm)
    held = data.subset(fold)
    return fit.fitted(held), fit.converged


def cross_validate(
    spec: ModelSpec,
    data: Dataset,
    plan: CvPlan,
    cfg: SolverConfig | None = None,
    d: str | None = None,
    full_fit: FitResult | None = None,
    n_jobs: int = 1,
) -> CvResult:
    """Refit once per fold of ``plan`` and score out-of-fold predictions.

    Folds whose refit does not converge are flagged; their predictions are
    NaN and the risk is taken over the remaining observations.
    """
    t0 = time.perf_counter()
    d = d or default_error_fn(data)
    if full_fit is None:
        full_fit = fit_model(spec, data, cfg)
    pred = np.full(data.n, np.nan)
    flagged: list[int] = []

    def task(fold):
        return _refit(spec, data, fold, cfg, full_fit)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            outs = list(pool.map(task, plan.folds))
    else:
        outs = [task(f) for f in plan.folds]
    for fold, (yhat, ok) in zip(plan.folds, outs):
        if ok:
            pred[fold] = yhat
        else:
            flagged.extend(int(i) for i in fold)
    notes = []
    if flagged:
        notes.append(f"{len(flagged)} held-out prediction(s) dropped: refit did not converge")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    ok = np.isfinite(pred)
    risk = eval_risk(data.y[ok], pred[ok], d) if ok.any() else np.nan
    return CvResult(pred, risk, spec.lam, d, plan, time.perf_counter() - t0, tuple(sorted(flagged)), tuple(notes))


def exact_loocv(
    spec: ModelSpec,
    data: Dataset,
    cfg: SolverConfig | None = None,
    d: str | None = None,
    full_fit: FitResult | None = None,
    n_jobs: int = 1,
) -> CvResult:
    """Leave-one-out CV by ``n`` refits."""
    return cross_validate(spec, data, make_plan(data.n), cfg, d, full_fit, n_jobs)


def kfold_cv(
    spec: ModelSpec,
    data: Dataset,
    k: int,
    seed: int = 0,
    cfg: SolverConfig | None = None,
    d: str | None = None,
    full_fit: FitResult | None = None,
    n_jobs: int = 1,
) -> CvResult:
    """k-fold CV with seeded fold assignment."""
    return cross_validate(spec, data, make_plan(data.n, "kfold", k, seed), cfg, d, full_fit, n_jobs)


def cv_path(
    spec: ModelSpec,
    data: Dataset,
    lambdas: Sequence[float],
    plan: CvPlan | None = None,
    cfg: SolverConfig | None = None,
    d: str | None = None,
    fits: Sequence[FitResult] | None = None,
    n_jobs: int = 1,
) -> list[CvResult]:
    """CV over a penalty grid; full fits are computed along the path if not given."""
    plan = plan or make_plan(data.n)
    if fits is None:
        fits = fit_path(spec, data, lambdas, cfg)
    return [
        cross_validate(spec.with_lambda(lam), data, plan, cfg, d, fit, n_jobs)
        for lam, fit in zip(lambdas, fits)
    ]
