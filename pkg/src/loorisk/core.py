"""Shared data model, error functions and risk aggregation.

Everything in here is deliberately small and immutable: datasets, model
specifications, fit results, ALO reports and risk curves are plain frozen
dataclasses that can be passed between threads without copying.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "AloError",
    "DimensionError",
    "InvalidTaskError",
    "ConflictError",
    "ShapeError",
    "CurvatureError",
    "UnsupportedEngineError",
    "DegeneratePointError",
    "DegenerateSpectrumError",
    "ConditioningError",
    "StaleFitError",
    "AssumptionViolation",
    "Dataset",
    "ModelSpec",
    "FitResult",
    "AloReport",
    "RiskCurve",
    "ERROR_FUNCTIONS",
    "error_values",
    "eval_risk",
    "default_error_fn",
    "assemble_risk_curve",
    "read_dataset_csv",
    "write_dataset_csv",
]


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------


class AloError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(AloError, ValueError):
    """Array lengths or shapes do not agree."""


class InvalidTaskError(AloError, ValueError):
    """Operation does not make sense for this kind of response."""


class ConflictError(AloError, ValueError):
    """Two inputs claim the same slot."""


class ShapeError(AloError, ValueError):
    """Matrix-valued data used without a matrix shape."""


class CurvatureError(AloError, ValueError):
    """A curvature that must be strictly positive is not."""


class UnsupportedEngineError(AloError, ValueError):
    """The requested engine cannot handle this model."""


class DegeneratePointError(AloError, ArithmeticError):
    """A Jacobian was requested at (or too close to) a kink."""


class DegenerateSpectrumError(DegeneratePointError):
    """Repeated or vanishing singular values / eigenvalues."""


class ConditioningError(AloError, ArithmeticError):
    """A matrix that must be inverted is numerically singular."""


class StaleFitError(AloError, ValueError):
    """The fit did not converge or belongs to a different problem."""


class AssumptionViolation(AloError, ArithmeticError):
    """A checkable regularity assumption of the method fails."""


# ---------------------------------------------------------------------------
# data model
# ---------------------------------------------------------------------------


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Design matrix and responses for one regression problem.

    Parameters
    ----------
    x : ndarray, shape (n, p)
        Rows are observations.  Matrix-valued observations are flattened
        row-major and ``matrix_shape`` records ``(p1, p2)``.
    y : ndarray, shape (n,)
    kind : {"regression", "binary"}
        Binary responses must be coded as -1/+1.
    matrix_shape : tuple of int, optional
    """

    x: np.ndarray
    y: np.ndarray
    kind: str = "regression"
    matrix_shape: tuple[int, int] | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DimensionError(f"x must be 2-d, got shape {x.shape}")
        if y.ndim != 1:
            y = y.ravel()
        n, p = x.shape
        if n < 1 or p < 1:
            raise DimensionError(f"need n >= 1 and p >= 1, got {x.shape}")
        if y.shape[0] != n:
            raise DimensionError(f"x has {n} rows but y has {y.shape[0]} entries")
        if self.kind not in ("regression", "binary"):
            raise InvalidTaskError(f"unknown task kind {self.kind!r}")
        if self.kind == "binary" and not np.all(np.isin(y, (-1.0, 1.0))):
            raise InvalidTaskError("binary responses must lie in {-1, +1}")
        shape = self.matrix_shape
        if shape is not None:
            shape = (int(shape[0]), int(shape[1]))
            if shape[0] * shape[1] != p:
                raise ShapeError(f"matrix_shape {shape} incompatible with p={p}")
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "matrix_shape", shape)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows) -> "Dataset":
        """Dataset restricted to ``rows`` (index array or boolean mask)."""
        rows = np.asarray(rows)
        return Dataset(self.x[rows], self.y[rows], self.kind, self.matrix_shape)

    def drop(self, i) -> "Dataset":
        """Dataset with the observations ``i`` removed."""
        keep = np.ones(self.n, dtype=bool)
        keep[np.atleast_1d(i)] = False
        return self.subset(keep)


@dataclass(frozen=True)
class ModelSpec:
    """Loss, regularizer, optional constraint, penalty level and intercept.

    The estimator is

        argmin_{beta in C}  sum_j loss(x_j' beta + b; y_j) + lam * R(beta)

    where the intercept ``b`` is present only if ``intercept`` is true and is
    never penalized or constrained.
    """

    loss: Any
    regularizer: Any
    lam: float
    constraint: Any = None
    intercept: bool = False

    def __post_init__(self):
        from .losses import get_loss
        from .regularizers import get_regularizer

        loss = get_loss(self.loss) if isinstance(self.loss, str) else self.loss
        reg = (
            get_regularizer(self.regularizer)
            if isinstance(self.regularizer, str)
            else self.regularizer
        )
        lam = float(self.lam)
        if not (lam > 0 and math.isfinite(lam)):
            raise ValueError(f"lambda must be positive and finite, got {self.lam}")
        if self.constraint is not None and not (loss.smooth and reg.smooth_hessian):
            raise UnsupportedEngineError(
                "constraints require a twice differentiable loss and regularizer"
            )
        object.__setattr__(self, "loss", loss)
        object.__setattr__(self, "regularizer", reg)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "intercept", bool(self.intercept))

    def with_lambda(self, lam: float) -> "ModelSpec":
        return ModelSpec(self.loss, self.regularizer, lam, self.constraint, self.intercept)

    def describe(self) -> dict:
        return {
            "loss": self.loss.id,
            "regularizer": self.regularizer.describe(),
            "constraint": None if self.constraint is None else self.constraint.id,
            "lambda": self.lam,
            "intercept": self.intercept,
        }


@dataclass(frozen=True)
class FitResult:
    """Solution of one penalized problem plus solver diagnostics.

    ``grad_norm`` is the scaled fixed-point residual the solver stopped on;
    ``converged`` says whether it met the requested tolerance.  Solver
    specific byproducts (ADMM iterates, SVM dual weights, ...) go in ``aux``.
    """

    beta: np.ndarray
    intercept_value: float | None
    theta: np.ndarray | None
    objective: float
    iterations: int
    grad_norm: float
    converged: bool = True
    lam: float | None = None
    aux: Mapping[str, Any] = field(default_factory=dict)

    def fitted(self, data: Dataset) -> np.ndarray:
        """Linear predictor x_j' beta (+ intercept) for every row of ``data``."""
        u = data.x @ self.beta
        if self.intercept_value is not None:
            u = u + self.intercept_value
        return u


@dataclass(frozen=True)
class AloReport:
    """Approximate leave-one-out predictions for one fitted model.

    ``predictions[i]`` is NaN for observations whose leverage saturated; those
    are listed in ``flagged`` and excluded from ``risk``.
    """

    predictions: np.ndarray
    hat_diag: np.ndarray
    risk: float
    active_set_size: int
    engine: str
    error_fn: str = "squared"
    lam: float | None = None
    warnings: tuple[str, ...] = ()
    flagged: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        def clean(a):
            return [None if not np.isfinite(v) else float(v) for v in np.asarray(a)]

        return {
            "engine": self.engine,
            "lambda": self.lam,
            "risk": None if not np.isfinite(self.risk) else float(self.risk),
            "error_fn": self.error_fn,
            "active_set_size": int(self.active_set_size),
            "predictions": clean(self.predictions),
            "h_diag": clean(self.hat_diag),
            "flagged": [int(i) for i in self.flagged],
            "warnings": list(self.warnings),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self, y: np.ndarray | None = None) -> str:
        """One row per observation: index, (y), prediction, h_diag, flagged."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["index"] + (["y"] if y is not None else []) + ["prediction", "h_diag", "flagged"]
        w.writerow(head)
        flagged = set(self.flagged)
        for i, (pred, h) in enumerate(zip(self.predictions, self.hat_diag)):
            row = [i] + ([repr(float(y[i]))] if y is not None else [])
            row += ["" if not np.isfinite(pred) else repr(float(pred)), repr(float(h)), int(i in flagged)]
            w.writerow(row)
        return buf.getvalue()


@dataclass(frozen=True)
class RiskCurve:
    """Risk estimates of several methods on a common (descending) lambda grid.

    Missing cells are NaN.  ``notes`` maps ``(lambda, method)`` to free-form
    warning text.
    """

    lambdas: np.ndarray
    risks: Mapping[str, np.ndarray]
    timings: Mapping[str, np.ndarray]
    notes: Mapping[tuple[float, str], str] = field(default_factory=dict)

    def __post_init__(self):
        lambdas = _frozen(np.asarray(self.lambdas, dtype=float).ravel())
        risks = {m: _frozen(v) for m, v in self.risks.items()}
        timings = {m: _frozen(v) for m, v in self.timings.items()}
        for m, v in list(risks.items()) + list(timings.items()):
            if v.shape != lambdas.shape:
                raise DimensionError(f"row {m!r} has length {v.size}, expected {lambdas.size}")
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "risks", risks)
        object.__setattr__(self, "timings", timings)

    @property
    def methods(self) -> list[str]:
        return list(self.risks)

    def argmin(self, method: str) -> float:
        """Lambda minimizing ``method``'s risk (largest lambda on ties)."""
        r = self.risks[method]
        if np.all(np.isnan(r)):
            raise ValueError(f"no risk values for {method!r}")
        return float(self.lambdas[int(np.nanargmin(r))])

    def flatten(self) -> list[tuple]:
        """Entries ``(lambda, method, risk, seconds, warnings)`` for present cells."""
        out = []
        for m in self.methods:
            for lam, r, t in zip(self.lambdas, self.risks[m], self.timings[m]):
                if np.isnan(r):
                    continue
                out.append((float(lam), m, float(r), float(t), self.notes.get((float(lam), m), "")))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "method", "risk", "seconds", "warnings"])
        for lam, m, r, t, note in self.flatten():
            w.writerow([repr(lam), m, repr(r), repr(t), note])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# error functions and risk
# ---------------------------------------------------------------------------


def _sign_pos(v: np.ndarray) -> np.ndarray:
    # sign with sign(0) = +1
    return np.where(v >= 0, 1.0, -1.0)


ERROR_FUNCTIONS = ("squared", "absolute", "zero_one_sign")


def error_values(y, yhat, d: str = "squared") -> np.ndarray:
    """Per-observation errors ``d(y_i, yhat_i)``."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise DimensionError(f"y has shape {y.shape} but yhat has shape {yhat.shape}")
    if d == "squared":
        return (y - yhat) ** 2
    if d == "absolute":
        return np.abs(y - yhat)
    if d == "zero_one_sign":
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise InvalidTaskError("zero_one_sign needs labels in {-1, +1}")
        return (_sign_pos(yhat) != y).astype(float)
    raise ValueError(f"unknown error function {d!r}; choose from {ERROR_FUNCTIONS}")


def eval_risk(y, yhat, d: str = "squared") -> float:
    """Average error ``(1/n) sum_i d(y_i, yhat_i)``.

    Parameters
    ----------
    y, yhat : array_like, shape (n,)
    d : {"squared", "absolute", "zero_one_sign"}
        ``zero_one_sign`` counts ``sign(yhat) != y`` with ``sign(0) = +1``.

    Examples
    --------
    >>> eval_risk([0, 0, 3], [1, 1, 0])
    3.6666666666666665
    """
    e = error_values(y, yhat, d)
    if e.size == 0:
        raise DimensionError("cannot evaluate risk on zero observations")
    return float(np.mean(e))


def default_error_fn(data: Dataset) -> str:
    return "zero_one_sign" if data.kind == "binary" else "squared"


def assemble_risk_curve(entries: Iterable[Sequence]) -> RiskCurve:
    """Build a :class:`RiskCurve` from ``(lambda, method, risk, seconds[, note])``.

    The grid is sorted by decreasing lambda.  Cells with no entry stay NaN.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("cannot assemble a risk curve from no entries")
    seen: dict[tuple[float, str], tuple[float, float, str]] = {}
    for e in entries:
        lam, method, risk, secs = float(e[0]), str(e[1]), float(e[2]), float(e[3])
        note = str(e[4]) if len(e) > 4 and e[4] is not None else ""
        key = (lam, method)
        if key in seen:
            raise ConflictError(f"duplicate entry for lambda={lam}, method={method!r}")
        seen[key] = (risk, secs, note)
    lambdas = np.array(sorted({k[0] for k in seen}, reverse=True))
    methods = list(dict.fromkeys(k[1] for k in seen))
    pos = {lam: i for i, lam in enumerate(lambdas)}
    risks = {m: np.full(lambdas.size, np.nan) for m in methods}
    timings = {m: np.full(lambdas.size, np.nan) for m in methods}
    notes = {}
    for (lam, m), (r, t, note) in seen.items():
        risks[m][pos[lam]] = r
        timings[m][pos[lam]] = t
        if note:
            notes[(lam, m)] = note
    return RiskCurve(lambdas, risks, timings, notes)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_dataset_csv(
    path,
    target: str = "last",
    kind: str | None = None,
    matrix_shape: tuple[int, int] | None = None,
) -> Dataset:
    """Read a dataset from CSV.

    The header row is optional.  ``target="last"`` takes the last column as
    the response; any other value names the response column in the header.
    ``kind=None`` infers "binary" when every response is -1 or +1.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DimensionError(f"{path}: no data rows")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    if not rows:
        raise DimensionError(f"{path}: header but no data rows")
    data = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    if target == "last":
        col = data.shape[1] - 1
    else:
        if header is None:
            raise ValueError(f"{path}: target column {target!r} requested but file has no header")
        if target not in header:
            raise ValueError(f"{path}: no column named {target!r}")
        col = header.index(target)
    y = data[:, col]
    x = np.delete(data, col, axis=1)
    if kind is None:
        kind = "binary" if np.all(np.isin(y, (-1.0, 1.0))) else "regression"
    return Dataset(x, y, kind, matrix_shape)


def write_dataset_csv(data: Dataset, path, header: bool = True) -> None:
    """Write ``data`` as CSV with the response in the last column."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"x{j}" for j in range(data.p)] + ["y"])
        for xi, yi in zip(data.x, data.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
