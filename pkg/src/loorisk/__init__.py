"""Approximate leave-one-out (ALO) risk estimation for regularized regression.

The package fits penalized and constrained regression models, computes
closed-form leave-one-out predictions from a single fit, and checks them
against exact refitting.

Typical use::

    from loorisk import ModelSpec, Dataset, fit_model, compute_alo
    spec = ModelSpec("squared", "lasso", lam=0.5)
    fit = fit_model(spec, data)
    report = compute_alo(spec, data, fit)
    report.risk
"""

from .core import (
    AloError,
    AloReport,
    Dataset,
    FitResult,
    ModelSpec,
    RiskCurve,
    assemble_risk_curve,
    eval_risk,
    read_dataset_csv,
    write_dataset_csv,
)
from .losses import HingeLoss, LogisticLoss, SquaredLoss, get_loss
from .regularizers import (
    FrobeniusSquared,
    GeneralizedLasso,
    GroupLasso,
    Lasso,
    LInf,
    Nuclear,
    Ridge,
    Slope,
    first_difference,
    get_regularizer,
)
from .constraints import PositiveOrthant, Polyhedron, PSDCone
from .solvers import SolverConfig, fit_model, fit_path
from .alo import LeverageSaturationWarning, compute_alo, select_engine
from .oracle import CvPlan, CvResult, exact_loocv, kfold_cv, make_plan
from .datagen import GenConfig, generate
from .sweep import bench, lambda_grid, risk_sweep

__version__ = "0.1.0"
