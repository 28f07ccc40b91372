"""Synthetic regression and classification problems for tests and demos.

All draws come from one counter-based generator
(``numpy.random.Generator(numpy.random.Philox(seed))``), so a config always
produces the same bytes on the same numpy build.

Scenarios
---------
``iid_gauss_linear``       ``X ~ N(0, 1/n)``, k-sparse Uniform[-3, 3] truth, ``y = X beta + eps``
``toeplitz_linear``        rows ``~ N(0, C/k)`` with ``C_ij = rho^|i-j|``, k-sparse Gaussian truth
``misspecified_sqrt``      ``X ~ N(0, 1/k)``, ``y = f(X beta + eps)``, ``f(x) = sign(x) sqrt|x|``
``heavy_tail_t3``          ``X ~ N(0, 1/k)``, Student-t(3) noise rescaled to the requested variance
``logistic_binary``        ``X ~ N(0, 1)``, labels in {-1, +1} drawn from a logistic model
``piecewise_constant_fused``  ``X ~ N(0, 0.05)``, truth is a standardized cumulative sum
                           of a k-sparse vector
``lowrank_matrix``         ``X_j ~ N(0, 1)`` of shape ``(p1, p2)``, rank-k truth ``sum z_l w_l'``
``psd_quadratic``          ``X_j ~ N(0, 1/n)`` of shape ``(p, p)``, truth ``C'C + diag(d)``

The linear scenarios accept ``design_var`` (``"1/n"``, ``"1/k"`` or ``"1"``)
and ``truth`` (``"gaussian"`` or ``"uniform"``) to override these defaults.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import Dataset

__all__ = ["SCENARIOS", "GenConfig", "generate", "make_rng", "toeplitz_cov"]

SCENARIOS = (
    "iid_gauss_linear",
    "toeplitz_linear",
    "misspecified_sqrt",
    "heavy_tail_t3",
    "logistic_binary",
    "piecewise_constant_fused",
    "lowrank_matrix",
    "psd_quadratic",
)

# noise standard deviations used when the config leaves it unset
_DEFAULT_NOISE = {
    "iid_gauss_linear": 0.8,
    "toeplitz_linear": 0.5,
    "misspecified_sqrt": 0.5,
    "heavy_tail_t3": 0.5,
    "logistic_binary": 0.0,
    "piecewise_constant_fused": 0.5,
    "lowrank_matrix": 0.5,
    "psd_quadratic": 7.0,
}


@dataclass(frozen=True)
class GenConfig:
    """Generator settings.

    ``p`` is the number of features; matrix scenarios use ``p1 x p2``
    (``lowrank_matrix``) or ``p x p`` (``psd_quadratic``) instead.
    ``signal_sd`` scales the truth of ``logistic_binary`` (default 3).
    """

    scenario: str = "iid_gauss_linear"
    n: int = 100
    p: int = 40
    k: int = 10
    noise_sd: float | None = None
    rho: float = 0.0
    seed: int = 0
    p1: int | None = None
    p2: int | None = None
    signal_sd: float = 3.0
    design_var: str | None = None
    truth: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.scenario == "lowrank_matrix":
            if self.p1 is None or self.p2 is None:
                raise ValueError("lowrank_matrix needs p1 and p2")
            if not 0 <= self.k <= min(self.p1, self.p2):
                raise ValueError("rank k must not exceed min(p1, p2)")
        elif self.scenario not in ("logistic_binary", "psd_quadratic") and not 0 <= self.k <= self.p:
            raise ValueError("k must satisfy 0 <= k <= p")
        if self.design_var not in (None, "1/n", "1/k", "1"):
            raise ValueError("design_var must be '1/n', '1/k' or '1'")
        if self.truth not in (None, "gaussian", "uniform"):
            raise ValueError("truth must be 'gaussian' or 'uniform'")
        if self.noise_sd is not None and self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")

    @property
    def sigma(self) -> float:
        return _DEFAULT_NOISE[self.scenario] if self.noise_sd is None else float(self.noise_sd)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def toeplitz_cov(p: int, rho: float) -> np.ndarray:
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _sparse_truth(rng, p, k, dist="gaussian"):
    beta = np.zeros(p)
    loc = rng.choice(p, size=k, replace=False)
    beta[loc] = rng.uniform(-3.0, 3.0, k) if dist == "uniform" else rng.standard_normal(k)
    return beta


def generate(cfg: GenConfig) -> tuple[Dataset, dict]:
    """Draw a dataset and its ground truth.

    Returns
    -------
    data : Dataset
    truth : dict
        ``beta`` (flattened for matrix scenarios), ``noise_sd``, the config,
        and scenario-specific extras.
    """
    rng = make_rng(cfg.seed)
    n, p, k, s = cfg.n, cfg.p, cfg.k, cfg.sigma
    sc = cfg.scenario
    truth: dict = {"config": json.loads(cfg.to_json()), "noise_sd": s}
    kind, shape = "regression", None
    iid = sc == "iid_gauss_linear"
    dvar = cfg.design_var or ("1/n" if iid else "1/k")
    kscale = {"1/n": 1.0 / np.sqrt(n), "1/k": 1.0 / np.sqrt(max(k, 1)), "1": 1.0}[dvar]
    tdist = cfg.truth or ("uniform" if iid else "gaussian")

    if sc in ("iid_gauss_linear", "misspecified_sqrt", "heavy_tail_t3"):
        x = rng.standard_normal((n, p)) * kscale
        beta = _sparse_truth(rng, p, k, tdist)
        if sc == "heavy_tail_t3":
            # t(3) has variance 3
            eps = rng.standard_t(3, size=n) * (s / np.sqrt(3.0))
        else:
            eps = rng.standard_normal(n) * s
        lin = x @ beta + eps
        y = np.sign(lin) * np.sqrt(np.abs(lin)) if sc == "misspecified_sqrt" else lin
    elif sc == "toeplitz_linear":
        cov = toeplitz_cov(p, cfg.rho)
        chol = np.linalg.cholesky(cov)
        x = rng.standard_normal((n, p)) @ chol.T * kscale
        beta = _sparse_truth(rng, p, k, tdist)
        y = x @ beta + rng.standard_normal(n) * s
        truth["cov"] = "toeplitz"
    elif sc == "logistic_binary":
        x = rng.standard_normal((n, p))
        beta = rng.standard_normal(p) * cfg.signal_sd
        if k < p:
            beta[rng.choice(p, size=p - k, replace=False)] = 0.0
        prob = 1.0 / (1.0 + np.exp(-(x @ beta)))
        y = np.where(rng.random(n) < prob, 1.0, -1.0)
        kind = "binary"
    elif sc == "piecewise_constant_fused":
        x = rng.standard_normal((n, p)) * np.sqrt(0.05)
        jumps = _sparse_truth(rng, p, k)
        beta = np.cumsum(jumps)
        sd = beta.std()
        beta = beta / sd if sd > 0 else beta
        y = x @ beta + rng.standard_normal(n) * s
    elif sc == "lowrank_matrix":
        p1, p2 = cfg.p1, cfg.p2
        x = rng.standard_normal((n, p1 * p2))
        z = rng.standard_normal((p1, k))
        w = rng.standard_normal((p2, k))
        B = z @ w.T
        beta = B.ravel()
        y = x @ beta + rng.standard_normal(n) * s
        shape = (p1, p2)
        truth["rank"] = k
    else:  # psd_quadratic
        x = rng.standard_normal((n, p * p)) / np.sqrt(n)
        C = rng.standard_normal((p, p))
        d = p * rng.standard_normal(p)
        B = C.T @ C + np.diag(d)
        beta = B.ravel()
        y = x @ beta + rng.standard_normal(n) * s
        shape = (p, p)

    truth["beta"] = beta
    return Dataset(x, y, kind=kind, matrix_shape=shape), truth
