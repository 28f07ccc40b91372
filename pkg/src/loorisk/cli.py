"""Command-line front end.

Subcommands: ``generate``, ``fit``, ``sweep``, ``loocv`` and ``bench``.
Every output is CSV or JSON and is accompanied by a ``manifest.json``
(written atomically) that records the command line, model, grid, seeds,
tolerances and per-stage wall-clock times.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
The default ``--jobs`` comes from the ``LOORISK_JOBS`` environment
variable (1 if unset).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .alo import ENGINES, compute_alo
from .constraints import PositiveOrthant, PSDCone
from .core import (
    ERROR_FUNCTIONS,
    AloError,
    Dataset,
    ModelSpec,
    default_error_fn,
    read_dataset_csv,
    write_dataset_csv,
)
from .datagen import SCENARIOS, GenConfig, generate
from .oracle import cross_validate, make_plan
from .regularizers import get_regularizer, first_difference, load_triplets
from .solvers import SolverConfig, fit_model
from .sweep import bench, lambda_grid, parse_methods, risk_sweep

__all__ = ["main", "build_parser", "RunManifest"]

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
JOBS_ENV = "LOORISK_JOBS"
REGULARIZERS = ("ridge", "lasso", "group_lasso", "gen_lasso", "slope", "linf", "nuclear", "frob_sq")


class UsageError(Exception):
    """Bad arguments or unreadable input."""


class NumericFailure(Exception):
    """Solver or ALO failure that the user cannot fix by changing flags alone."""


@dataclass
class RunManifest:
    """Everything needed to reproduce one CLI run."""

    command: str
    argv: list[str]
    version: str = __version__
    model: dict | None = None
    grid: dict | None = None
    seeds: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    engine: str | None = None
    outputs: list[str] = field(default_factory=list)
    seconds: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        _atomic_write(path, json.dumps(asdict(self), indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV, "1")
    try:
        jobs = int(raw)
    except ValueError:
        raise UsageError(f"{JOBS_ENV}={raw!r} is not an integer") from None
    if jobs < 1:
        raise UsageError(f"{JOBS_ENV} must be at least 1")
    return jobs


# ---------------------------------------------------------------------------
# argument groups
# ---------------------------------------------------------------------------


def _add_data_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--data", required=True, help="CSV file, response in the last column by default")
    g.add_argument("--target", default="last", help="response column name (needs a header)")
    g.add_argument("--kind", choices=("regression", "binary"), help="default: inferred from the response")
    g.add_argument("--shape", type=int, nargs=2, metavar=("P1", "P2"), help="matrix shape of the coefficients")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--loss", choices=("squared", "logistic", "hinge"), default="squared")
    g.add_argument("--model", choices=REGULARIZERS, required=True, help="penalty")
    g.add_argument("--intercept", action="store_true", help="fit an unpenalized intercept")
    g.add_argument("--constraint", choices=("positive_orthant", "psd"))
    g.add_argument("--groups", help="comma-separated group label per feature (group_lasso)")
    g.add_argument("--group-weights", help="comma-separated weight per group (group_lasso)")
    g.add_argument("--d-matrix", help="row,col,value triplets of the penalty matrix (gen_lasso)")
    g.add_argument("--fused", action="store_true", help="use first differences as the gen_lasso matrix")
    g.add_argument("--slope-weights", help="comma-separated non-increasing weights (slope)")
    g.add_argument("--engine", choices=("auto",) + ENGINES, default="auto")
    g.add_argument("--error", choices=ERROR_FUNCTIONS, help="error function for the risk")
    g.add_argument("--tol", type=float, default=1e-10, help="solver tolerance")
    g.add_argument("--max-iter", type=int, default=50000)


def _add_grid_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("lambda grid")
    g.add_argument(
        "--lambda-grid",
        nargs=3,
        metavar=("COUNT", "MIN", "MAX"),
        required=True,
        help="COUNT values from MIN to MAX, visited in decreasing order",
    )
    scale = g.add_mutually_exclusive_group()
    scale.add_argument("--log", dest="log", action="store_true", default=True, help="log spacing (default)")
    scale.add_argument("--linear", dest="log", action="store_false", help="linear spacing")


def _add_gen_args(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    g = p.add_argument_group("generator")
    g.add_argument("--scenario", choices=SCENARIOS, default="iid_gauss_linear")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--p", type=int, default=40)
    g.add_argument("--k", type=int, default=10)
    g.add_argument("--p1", type=int)
    g.add_argument("--p2", type=int)
    g.add_argument("--noise-sd", type=float)
    g.add_argument("--rho", type=float, default=0.0)
    g.add_argument("--signal-sd", type=float, default=3.0)
    g.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loorisk",
        description="Fit regularized models and estimate out-of-sample risk by approximate leave-one-out.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset and its ground truth")
    _add_gen_args(p)
    p.add_argument("--out", required=True, help="dataset CSV path; truth goes to <stem>.truth.json")

    p = sub.add_parser("fit", help="fit one model and report its ALO risk")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("sweep", help="risk curves over a lambda grid")
    _add_data_args(p)
    _add_model_args(p)
    _add_grid_args(p)
    p.add_argument("--methods", default="alo", help="comma list of alo, loocv, kfold<k> (default alo)")
    p.add_argument("--seed", type=int, default=0, help="fold assignment seed for kfold")
    p.add_argument("--jobs", type=int, help=f"worker threads (default ${JOBS_ENV} or 1)")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("loocv", help="exact leave-one-out (or k-fold) CV by refitting")
    _add_data_args(p)
    _add_model_args(p)
    _add_grid_args(p)
    p.add_argument("--kfold", type=int, help="use k folds instead of leave-one-out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("bench", help="time single path fit, ALO and LOOCV")
    _add_gen_args(p)
    _add_model_args(p)
    _add_grid_args(p)
    p.add_argument("--data", help="benchmark on this CSV instead of generated data")
    p.add_argument("--target", default="last")
    p.add_argument("--kind", choices=("regression", "binary"))
    p.add_argument("--shape", type=int, nargs=2, metavar=("P1", "P2"))
    p.add_argument("--repeats", type=int, default=3, help="generated datasets (seeds seed..seed+R-1)")
    p.add_argument(
        "--loocv-budget",
        type=float,
        help="stop LOOCV once it has taken this multiple of the fit time (reports a lower bound)",
    )
    p.add_argument("--out", required=True, help="timing CSV path")
    # bench reuses the model group but the penalty defaults to lasso there
    p.set_defaults(model="lasso")
    for action in p._actions:
        if action.dest == "model":
            action.required = False
    return parser


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _csv_floats(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _load_data(args) -> Dataset:
    path = Path(args.data)
    if not path.is_file():
        raise UsageError(f"cannot read dataset {path}: no such file")
    try:
        return read_dataset_csv(path, args.target, args.kind, tuple(args.shape) if args.shape else None)
    except OSError as exc:
        raise UsageError(f"cannot read dataset {path}: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _build_spec(args, data: Dataset, lam: float = 1.0) -> ModelSpec:
    name = args.model
    shape = tuple(args.shape) if args.shape else data.matrix_shape
    try:
        if name == "group_lasso":
            if not args.groups:
                raise UsageError("group_lasso needs --groups")
            labels = [t.strip() for t in args.groups.split(",")]
            if len(labels) != data.p:
                raise UsageError(f"--groups has {len(labels)} labels for {data.p} features")
            weights = _csv_floats(args.group_weights, "--group-weights") if args.group_weights else None
            reg = get_regularizer(name, groups=labels, weights=weights)
        elif name == "gen_lasso":
            if args.fused == bool(args.d_matrix):
                raise UsageError("gen_lasso needs exactly one of --fused or --d-matrix")
            if args.fused:
                D = first_difference(data.p)
            else:
                dpath = Path(args.d_matrix)
                if not dpath.is_file():
                    raise UsageError(f"cannot read penalty matrix {dpath}: no such file")
                D = load_triplets(dpath).toarray()
                if D.shape[1] > data.p:
                    raise UsageError(f"{dpath}: column index beyond p={data.p}")
                if D.shape[1] < data.p:
                    D = np.hstack([D, np.zeros((D.shape[0], data.p - D.shape[1]))])
            reg = get_regularizer(name, D=D)
        elif name == "slope":
            if args.slope_weights:
                w = _csv_floats(args.slope_weights, "--slope-weights")
            else:
                w = np.linspace(1.0, 0.0, data.p, endpoint=False)
            reg = get_regularizer(name, weights=w)
        elif name in ("nuclear", "frob_sq"):
            if shape is None:
                raise UsageError(f"{name} needs --shape P1 P2")
            reg = get_regularizer(name, shape=shape)
        else:
            reg = get_regularizer(name)
        constraint = None
        if args.constraint == "positive_orthant":
            constraint = PositiveOrthant()
        elif args.constraint == "psd":
            side = int(round(np.sqrt(data.p)))
            if side * side != data.p:
                raise UsageError(f"psd constraint needs p to be a square, got {data.p}")
            constraint = PSDCone(side)
        return ModelSpec(args.loss, reg, lam, constraint, args.intercept)
    except UsageError:
        raise
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def _solver_cfg(args) -> SolverConfig:
    try:
        return SolverConfig(max_iter=args.max_iter, tol=args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _grid(args) -> np.ndarray:
    count, lo, hi = args.lambda_grid
    try:
        count_i = int(count)
        return lambda_grid(count_i, float(lo), float(hi), args.log)
    except ValueError as exc:
        raise UsageError(f"invalid --lambda-grid: {exc}") from None


def _jobs(args) -> int:
    jobs = args.jobs if getattr(args, "jobs", None) is not None else _default_jobs()
    if jobs < 1:
        raise UsageError("--jobs must be at least 1")
    return jobs


def _tolerances(args) -> dict:
    return {"solver_tol": args.tol, "max_iter": args.max_iter}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_generate(args, manifest: RunManifest) -> None:
    try:
        cfg = GenConfig(
            scenario=args.scenario,
            n=args.n,
            p=args.p,
            k=args.k,
            noise_sd=args.noise_sd,
            rho=args.rho,
            seed=args.seed,
            p1=args.p1,
            p2=args.p2,
            signal_sd=args.signal_sd,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    t = time.perf_counter()
    data, truth = generate(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(f".{out.name}.tmp")
    write_dataset_csv(data, tmp)
    os.replace(tmp, out)
    truth_path = out.with_name(out.stem + ".truth.json")
    truth_out = dict(truth, matrix_shape=data.matrix_shape, kind=data.kind)
    _atomic_write(truth_path, json.dumps(truth_out, indent=2, default=_json_default) + "\n")
    manifest.seeds = {"generator": args.seed}
    manifest.outputs = [str(out), str(truth_path)]
    manifest.seconds["generate"] = time.perf_counter() - t
    manifest.model = {"generator": json.loads(cfg.to_json())}
    manifest.write(out.with_name(out.stem + ".manifest.json"))


def _fit_payload(spec, fit) -> dict:
    return {
        "model": spec.describe(),
        "beta": fit.beta,
        "intercept": fit.intercept_value,
        "objective": fit.objective,
        "iterations": fit.iterations,
        "residual": fit.grad_norm,
        "converged": fit.converged,
    }


def cmd_fit(args, manifest: RunManifest) -> None:
    data = _load_data(args)
    spec = _build_spec(args, data, args.lam)
    cfg = _solver_cfg(args)
    out = Path(args.out_dir)
    t = time.perf_counter()
    fit = fit_model(spec, data, cfg)
    manifest.seconds["fit"] = time.perf_counter() - t
    if not fit.converged:
        raise NumericFailure(f"solver did not converge (residual {fit.grad_norm:.3g})")
    t = time.perf_counter()
    try:
        report = compute_alo(spec, data, fit, args.engine, args.error)
    except AloError as exc:
        raise NumericFailure(f"{type(exc).__name__}: {exc}") from None
    manifest.seconds["alo"] = time.perf_counter() - t
    fit_path = out / "fit.json"
    rep_path = out / "alo.json"
    pred_path = out / "alo_predictions.csv"
    _atomic_write(fit_path, json.dumps(_fit_payload(spec, fit), indent=2, default=_json_default) + "\n")
    _atomic_write(rep_path, report.to_json(indent=2) + "\n")
    _atomic_write(pred_path, report.to_csv(data.y))
    manifest.model = spec.describe()
    manifest.engine = report.engine
    manifest.tolerances = _tolerances(args)
    manifest.outputs = [str(fit_path), str(rep_path), str(pred_path)]
    manifest.write(out / "manifest.json")
    print(f"lambda={spec.lam:g} engine={report.engine} risk={report.risk:.6g} active={report.active_set_size}")


def cmd_sweep(args, manifest: RunManifest) -> None:
    data = _load_data(args)
    spec = _build_spec(args, data)
    cfg = _solver_cfg(args)
    lambdas = _grid(args)
    try:
        methods = parse_methods(args.methods)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    jobs = _jobs(args)
    out = Path(args.out_dir)
    t = time.perf_counter()
    res = risk_sweep(spec, data, lambdas, methods, cfg, args.engine, args.error, jobs, args.seed)
    manifest.seconds["fit_path"] = res.fit_seconds
    manifest.seconds["total"] = time.perf_counter() - t
    outputs = []
    curve_path = out / "risk_curve.csv"
    _atomic_write(curve_path, res.curve.to_csv())
    outputs.append(str(curve_path))
    if "alo" in methods:
        for k, rep in enumerate(res.reports):
            if rep is None:
                continue
            path = out / "alo" / f"lambda_{k:03d}.json"
            _atomic_write(path, rep.to_json(indent=2) + "\n")
            outputs.append(str(path))
    _grid_manifest(manifest, args, lambdas)
    manifest.model = {k: v for k, v in spec.describe().items() if k != "lambda"}
    manifest.engine = args.engine
    manifest.seeds = {"kfold": args.seed}
    manifest.tolerances = _tolerances(args)
    manifest.outputs = outputs
    manifest.write(out / "manifest.json")
    n_fail = sum(1 for f in res.fits if not f.converged)
    alo_ok = [r for r in res.reports if r is not None]
    if "alo" in methods and not alo_ok:
        raise NumericFailure("ALO failed at every lambda; see the warnings column")
    if n_fail == len(res.fits):
        raise NumericFailure("the solver did not converge at any lambda")
    print(res.curve.to_csv(), end="")


def _grid_manifest(manifest, args, lambdas):
    # the grid, not the spec's placeholder lambda, is what was run
    manifest.grid = {
        "count": int(lambdas.size),
        "min": float(lambdas.min()),
        "max": float(lambdas.max()),
        "log": bool(args.log),
        "values": lambdas,
    }


def cmd_loocv(args, manifest: RunManifest) -> None:
    data = _load_data(args)
    spec = _build_spec(args, data)
    cfg = _solver_cfg(args)
    lambdas = _grid(args)
    jobs = _jobs(args)
    try:
        plan = make_plan(data.n, "kfold", args.kfold, args.seed) if args.kfold else make_plan(data.n)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    method = f"kfold{args.kfold}" if args.kfold else "loocv"
    out = Path(args.out_dir)
    t = time.perf_counter()
    res = risk_sweep(spec, data, lambdas, [method], cfg, args.engine, args.error, jobs, args.seed)
    manifest.seconds["total"] = time.perf_counter() - t
    curve_path = out / "risk_curve.csv"
    pred_path = out / "predictions.csv"
    _atomic_write(curve_path, res.curve.to_csv())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "index", "y", "prediction"])
    for lam, row in zip(lambdas, res.cv[method]):
        for i, (yi, pi) in enumerate(zip(data.y, row.predictions)):
            w.writerow([repr(float(lam)), i, repr(float(yi)), "" if not np.isfinite(pi) else repr(float(pi))])
    _atomic_write(pred_path, buf.getvalue())
    _grid_manifest(manifest, args, lambdas)
    manifest.model = {k: v for k, v in spec.describe().items() if k != "lambda"}
    manifest.seeds = {"kfold": args.seed} if args.kfold else {}
    manifest.tolerances = _tolerances(args)
    manifest.outputs = [str(curve_path), str(pred_path)]
    manifest.model["folds"] = plan.describe()["folds"] if args.kfold else "leave-one-out"
    manifest.write(out / "manifest.json")
    print(res.curve.to_csv(), end="")


def cmd_bench(args, manifest: RunManifest) -> None:
    if args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    if args.loocv_budget is not None and args.loocv_budget <= 0:
        raise UsageError("--loocv-budget must be positive")
    lambdas = _grid(args)
    cfg = _solver_cfg(args)
    if args.data:
        datasets = [_load_data(args)] * args.repeats
        seeds = {}
    else:
        try:
            datasets = [
                generate(
                    GenConfig(
                        scenario=args.scenario,
                        n=args.n,
                        p=args.p,
                        k=args.k,
                        noise_sd=args.noise_sd,
                        rho=args.rho,
                        seed=args.seed + r,
                        p1=args.p1,
                        p2=args.p2,
                        signal_sd=args.signal_sd,
                    )
                )[0]
                for r in range(args.repeats)
            ]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        seeds = {"generator": list(range(args.seed, args.seed + args.repeats))}
    spec = _build_spec(args, datasets[0])
    t = time.perf_counter()
    rows = bench(spec, datasets, lambdas, cfg, args.loocv_budget)
    manifest.seconds["total"] = time.perf_counter() - t
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "p", "stage", "mean_s", "sd_s", "repeats", "note"])
    for r in rows:
        w.writerow([r.n, r.p, r.stage, repr(r.mean_s), "" if r.sd_s is None else repr(r.sd_s), r.repeats, r.note])
    out = Path(args.out)
    _atomic_write(out, buf.getvalue())
    _grid_manifest(manifest, args, lambdas)
    manifest.model = {k: v for k, v in spec.describe().items() if k != "lambda"}
    manifest.seeds = seeds
    manifest.tolerances = _tolerances(args)
    manifest.outputs = [str(out)]
    fit_mean = rows[0].mean_s
    manifest.seconds["ratios"] = {
        "alo_over_fit": rows[1].mean_s / fit_mean if fit_mean > 0 else None,
        "loocv_over_fit": rows[2].mean_s / fit_mean if fit_mean > 0 else None,
    }
    manifest.write(out.with_name(out.stem + ".manifest.json"))
    print(buf.getvalue(), end="")


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "sweep": cmd_sweep,
    "loocv": cmd_loocv,
    "bench": cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    manifest = RunManifest(command=args.command, argv=argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # warnings are carried in the outputs
            COMMANDS[args.command](args, manifest)
    except UsageError as exc:
        print(f"loorisk {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericFailure, AloError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"loorisk {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
