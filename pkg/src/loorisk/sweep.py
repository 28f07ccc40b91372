"""Risk curves over a penalty grid and timing measurements.

:func:`risk_sweep` fits the path once (descending lambda, warm starts) and
scores every requested method at every lambda.  :func:`bench` times a
single path fit, ALO on that path, and leave-one-out refitting of the
path.
"""

from __future__ import annotations

import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .alo import compute_alo
from .core import AloError, AloReport, Dataset, FitResult, ModelSpec, RiskCurve, assemble_risk_curve
from .oracle import CvResult, cross_validate, make_plan
from .solvers import SolverConfig, fit_path

__all__ = ["lambda_grid", "parse_methods", "SweepResult", "risk_sweep", "BenchRow", "bench"]


def lambda_grid(count: int, lo: float, hi: float, log: bool = True) -> np.ndarray:
    """``count`` values between ``lo`` and ``hi`` in decreasing order."""
    if count < 1:
        raise ValueError("lambda grid must have at least one point")
    if not (0 < lo <= hi):
        raise ValueError(f"need 0 < min <= max, got {lo}, {hi}")
    grid = np.geomspace(lo, hi, count) if log else np.linspace(lo, hi, count)
    return grid[::-1].copy()


def parse_methods(text: str | Sequence[str]) -> list[str]:
    """Validate method names: ``alo``, ``loocv`` and ``kfold<k>``."""
    items = [m.strip() for m in text.split(",")] if isinstance(text, str) else list(text)
    items = [m for m in items if m]
    if not items:
        raise ValueError("no methods given")
    for m in items:
        if m not in ("alo", "loocv") and not re.fullmatch(r"kfold\d+", m):
            raise ValueError(f"unknown method {m!r}; use alo, loocv or kfold<k>")
    return items


@dataclass
class SweepResult:
    curve: RiskCurve
    fits: list[FitResult]
    reports: list[AloReport | None]
    cv: dict[str, list[CvResult]] = field(default_factory=dict)
    fit_seconds: float = 0.0


def risk_sweep(
    spec: ModelSpec,
    data: Dataset,
    lambdas: Sequence[float],
    methods: Sequence[str] = ("alo",),
    cfg: SolverConfig | None = None,
    engine: str = "auto",
    d: str | None = None,
    n_jobs: int = 1,
    seed: int = 0,
) -> SweepResult:
    """Score ``methods`` along ``lambdas``.

    ALO failures at one lambda (degenerate points, conditioning) leave a
    NaN cell with the error text as its note instead of aborting.
    """
    methods = parse_methods(methods)
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size == 0:
        raise ValueError("empty lambda grid")
    t0 = time.perf_counter()
    fits = fit_path(spec, data, lambdas, cfg)
    fit_seconds = time.perf_counter() - t0
    entries: list[tuple] = []
    reports: list[AloReport | None] = [None] * lambdas.size
    cv: dict[str, list[CvResult]] = {}

    if "alo" in methods:

        def one(k):
            s = spec.with_lambda(lambdas[k])
            t = time.perf_counter()
            try:
                rep = compute_alo(s, data, fits[k], engine, d)
                note = "; ".join(rep.warnings)
                return rep, rep.risk, time.perf_counter() - t, note
            except AloError as exc:
                return None, np.nan, time.perf_counter() - t, f"{type(exc).__name__}: {exc}"

        if n_jobs > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                outs = list(pool.map(one, range(lambdas.size)))
        else:
            outs = [one(k) for k in range(lambdas.size)]
        for k, (rep, risk, secs, note) in enumerate(outs):
            reports[k] = rep
            entries.append((lambdas[k], "alo", risk, secs, note))

    for m in methods:
        if m == "alo":
            continue
        plan = make_plan(data.n) if m == "loocv" else make_plan(data.n, "kfold", int(m[5:]), seed)
        rows = []
        for k, lam in enumerate(lambdas):
            res = cross_validate(spec.with_lambda(lam), data, plan, cfg, d, fits[k], n_jobs)
            rows.append(res)
            entries.append((lam, m, res.risk, res.seconds, "; ".join(res.warnings)))
        cv[m] = rows
    curve = assemble_risk_curve(entries)
    return SweepResult(curve, fits, reports, cv, fit_seconds)


@dataclass(frozen=True)
class BenchRow:
    n: int
    p: int
    stage: str
    mean_s: float
    sd_s: float | None
    repeats: int
    note: str = ""


def _loo_path_time(spec, data, lambdas, cfg, budget):
    """Time leave-one-out path refits; stop once ``budget`` seconds are spent.

    Returns ``(seconds, completed)``; with early stopping the full cost is
    at least ``seconds`` (a lower bound).
    """
    t0 = time.perf_counter()
    done = 0
    for i in range(data.n):
        fit_path(spec, data.drop(i), lambdas, cfg)
        done += 1
        if budget is not None and time.perf_counter() - t0 > budget:
            break
    return time.perf_counter() - t0, done


def bench(
    spec: ModelSpec,
    datasets: Sequence[Dataset],
    lambdas: Sequence[float],
    cfg: SolverConfig | None = None,
    loocv_budget_factor: float | None = None,
) -> list[BenchRow]:
    """Mean and sd over ``datasets`` of path-fit, ALO and LOOCV times.

    ``loocv_budget_factor`` stops leave-one-out refitting once it has taken
    that multiple of the single path fit time; the reported LOOCV time is
    then a lower bound and the row notes how many refits completed.
    """
    if len(datasets) < 1:
        raise ValueError("repeats must be at least 1")
    fit_t, alo_t, loo_t, notes = [], [], [], []
    for data in datasets:
        t = time.perf_counter()
        fits = fit_path(spec, data, lambdas, cfg)
        fit_t.append(time.perf_counter() - t)
        t = time.perf_counter()
        for lam, f in zip(lambdas, fits):
            try:
                compute_alo(spec.with_lambda(lam), data, f)
            except AloError:
                pass
        alo_t.append(time.perf_counter() - t)
        budget = None if loocv_budget_factor is None else loocv_budget_factor * fit_t[-1]
        secs, done = _loo_path_time(spec, data, lambdas, cfg, budget)
        loo_t.append(secs)
        if done < data.n:
            notes.append(f"stopped after {done}/{data.n} refits (lower bound)")
    n, p = datasets[0].n, datasets[0].p
    r = len(datasets)

    def row(stage, vals, note=""):
        sd = float(np.std(vals, ddof=1)) if r > 1 else None
        return BenchRow(n, p, stage, float(np.mean(vals)), sd, r, note)

    return [
        row("single_fit", fit_t),
        row("alo", alo_t),
        row("loocv", loo_t, "; ".join(dict.fromkeys(notes))),
    ]
