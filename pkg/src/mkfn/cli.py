"""Command-line entry point: ``mkfn {train,score,eval,synth,joint-train,bench}``.

Exit codes: 0 success, 1 other library error, 2 usage error, 3 numerical
failure, 4 non-convergence (any model is still written), 5 data or file
format error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import nullcontext
from typing import Optional

import numpy as np

from . import data_io, evaluation, experiments
from .exceptions import (
    FormatError,
    GridSearchError,
    InvalidDataError,
    MKFNError,
    NumericalError,
    ShapeError,
    StepSizeError,
)
from .fn_solver import FnModel
from .joint_mkl import JointMklModel, TaskBankSet, fit_joint
from .lp_mkl import MklConfig, MklModel

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_NOT_CONVERGED = 4
EXIT_DATA = 5
DEFAULT_SEED = 0
DEFAULT_DELTA_MULT = 1e-3
DEFAULT_WIDTH_FACTOR = 0.5

log = logging.getLogger("mkfn")

_METHODS = {"lp-mkl": "lp_mkl", "lp-mkl-grad": "lp_mkl_grad", "fn-average": "fn_average",
            "fn-product": "fn_product"}


class _Usage(Exception):
    pass


def _floats(text: str) -> tuple:
    try:
        return tuple(float(eval_fraction(t)) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def eval_fraction(token: str) -> float:
    """``"4/3"`` -> 1.333..., ``"1e6"`` -> 1e6."""
    token = token.strip()
    if "/" in token:
        num, den = token.split("/", 1)
        return float(num) / float(den)
    return float(token)


def _number(text: str) -> float:
    try:
        return eval_fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help=f"random seed (default {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, default=None,
                        help="BLAS/worker threads (default: all cores; 1 = serial)")
    common.add_argument("--output", default=None, help="primary output file (default: stdout)")
    common.add_argument("--format", choices=("text", "json-lines"), default="text")
    common.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--features", help="feature CSV")
    data.add_argument("--header", action="store_true", help="CSV has a header row")
    data.add_argument("--label-col", type=int, default=None, help="label column (1 target, -1 anomaly)")
    data.add_argument("--species-col", type=int, default=None, help="anomaly species column")
    data.add_argument("--per-attribute", action="store_true", help="one kernel per feature column")

    hyper = argparse.ArgumentParser(add_help=False)
    hyper.add_argument("--p", type=_number, default=2.0, help="norm exponent (accepts fractions like 4/3)")
    hyper.add_argument("--delta-mult", type=_number, default=DEFAULT_DELTA_MULT,
                       help="delta as a multiple of the training size n")
    hyper.add_argument("--delta", type=_number, default=None, help="absolute delta (overrides --delta-mult)")
    hyper.add_argument("--tol", type=_number, default=None, help="alpha-change tolerance")
    hyper.add_argument("--max-iter", type=int, default=200)

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--p-list", type=_floats, default=None, help="grid of p values")
    grid.add_argument("--delta-mults", type=_floats, default=None, help="grid of delta multipliers")
    grid.add_argument("--width-factors", type=_floats, default=None, help="grid of width factors")

    parser = argparse.ArgumentParser(prog="mkfn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common, data, hyper, grid], help="fit a model")
    p.add_argument("--kernels", help="kernel-bank file (instead of --features)")
    p.add_argument("--distances", action="store_true", help="--kernels holds distance matrices")
    p.add_argument("--method", choices=tuple(_METHODS), default="lp-mkl")
    p.add_argument("--width-factor", type=_number, default=DEFAULT_WIDTH_FACTOR)
    p.add_argument("--grid", action="store_true", help="select hyperparameters on --val")
    p.add_argument("--val", help="validation CSV (labelled) or, with --kernels, a cross-kernel file")
    p.add_argument("--val-labels", help="one label (1/-1) per line, for a cross-kernel --val")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", parents=[common, data], help="score test samples")
    p.add_argument("--model", required=True)
    p.add_argument("--cross", help="cross-kernel file (instead of --features)")
    p.add_argument("--task", type=int, default=0, help="task index for a joint model")
    p.add_argument("--raw", action="store_true", help="add the raw projection column")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", parents=[common, data, grid], help="repeated-split evaluation")
    p.add_argument("--method", choices=tuple(_METHODS), default="lp-mkl")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--train-frac", type=float, default=0.6)
    p.add_argument("--val-frac", type=float, default=0.2)
    p.add_argument("--test-frac", type=float, default=0.2)
    p.add_argument("--synthetic", type=int, default=None, metavar="J",
                   help="evaluate on a synthetic Gaussian task with J views")
    p.add_argument("--scale", type=float, default=experiments.SCALE, help="synthetic count scale")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common, grid], help="synthetic experiments")
    p.add_argument("--experiment", choices=("views", "noisy"), required=True)
    p.add_argument("--j-range", type=_ints, default=experiments.VIEW_COUNTS)
    p.add_argument("--noise-range", type=_ints, default=experiments.NOISE_COUNTS)
    p.add_argument("--noise-dim", type=int, default=None, help="noise feature dimension (default: view dimension)")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--scale", type=float, default=experiments.SCALE)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("joint-train", parents=[common, hyper], help="joint multi-task fit")
    p.add_argument("--kernels", action="append", required=True, help="kernel-bank file per task (repeat)")
    p.add_argument("--task-names", default=None, help="comma-separated task names")
    p.set_defaults(func=cmd_joint_train)

    p = sub.add_parser("bench", parents=[common], help="solver runtime table")
    p.add_argument("--n-list", type=_ints, default=(100,))
    p.add_argument("--j-list", type=_ints, default=(5, 15, 50))
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--p", type=_number, default=2.0)
    p.add_argument("--delta-mult", type=_number, default=1e-2)
    p.set_defaults(func=cmd_bench)
    return parser


# ----------------------------------------------------------------- helpers


def _emit(args, text: str) -> None:
    if args.output:
        data_io.atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _summary(args, record: dict) -> None:
    """Human log line on stderr; machine summary on stdout for json-lines."""
    log.info(" ".join(f"{k}={_short(v)}" for k, v in record.items()))
    if args.format == "json-lines" and args.output:
        sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")


def _short(v):
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_short(x) for x in v) + "]"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _load_dataset(args, path=None, allow_empty=False) -> data_io.Dataset:
    return data_io.load_features_csv(
        path or args.features, header=args.header, label_col=args.label_col,
        species_col=args.species_col, per_attribute=args.per_attribute, allow_empty=allow_empty,
    )


def _grid_from(args) -> evaluation.HyperGrid:
    g = evaluation.HyperGrid()
    return evaluation.HyperGrid(
        p_values=args.p_list or g.p_values,
        delta_multipliers=args.delta_mults or g.delta_multipliers,
        width_factors=args.width_factors or g.width_factors,
    )


def _config(args, n: int, p: Optional[float] = None) -> MklConfig:
    delta = args.delta if args.delta is not None else args.delta_mult * n
    return MklConfig(p=args.p if p is None else p, delta=delta, tol=args.tol, max_iter=args.max_iter)


def _model_record(model) -> dict:
    if isinstance(model, FnModel):
        return {"model": "fn", "fusion": model.fusion, "delta": model.delta}
    rec = {"p": model.p, "delta": model.delta, "iterations_used": model.iterations_used,
           "final_change": model.final_change, "converged": bool(model.converged),
           "beta": [float(b) for b in model.beta]}
    return rec


def _converged(model) -> bool:
    return bool(getattr(model, "converged", True))


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    if not args.output:
        raise _Usage("train needs --output for the model file")
    if bool(args.features) == bool(args.kernels):
        raise _Usage("give exactly one of --features or --kernels")
    if args.grid and not args.val:
        raise _Usage("--grid requires --val")
    method = _METHODS[args.method]
    recipe = None
    if args.features:
        ds = _load_dataset(args)
        if ds.n_anomalies:
            log.warning("ignoring %d anomaly rows in the training file", ds.n_anomalies)
        views = ds.view_columns()
        log.info("training set n=%d d=%d J=%d", ds.n_targets, ds.d, len(views))
        train = ds.targets
        if args.grid:
            val = _load_dataset(args, args.val)
            if not (val.n_targets and val.n_anomalies):
                raise InvalidDataError("validation file needs both targets and anomalies (use --label-col)")
            X_val = np.vstack([val.targets, val.anomalies])
            val_labels = np.r_[np.ones(val.n_targets, bool), np.zeros(val.n_anomalies, bool)]

            def factory(wf):
                rec = data_io.recipe_for(train, views, wf)
                return rec.bank().with_cross(rec.cross(X_val))

            res = evaluation.grid_select(factory, val_labels, _grid_from(args), method,
                                         {"tol": args.tol, "max_iter": args.max_iter})
            model = res.model
            recipe = data_io.recipe_for(train, views, res.width_factor)
            _summary(args, {"selected_p": res.p, "selected_delta_mult": res.delta_multiplier,
                            "selected_width_factor": res.width_factor, "val_auc": res.auc,
                            "failed_cells": len(res.failures)})
        else:
            recipe = data_io.recipe_for(train, views, args.width_factor)
            bank = recipe.bank()
            model = _fit(method, bank, _config(args, bank.n))
    else:
        if args.distances:
            bank = data_io.load_distance_bank(args.kernels, width_factor=args.width_factor)
        else:
            bank = data_io.load_kernel_bank(args.kernels)
        log.info("kernel bank n=%d J=%d", bank.n, bank.J)
        if args.grid:
            cross = data_io.load_cross_kernels(args.val)
            if not args.val_labels:
                raise _Usage("--grid with --kernels needs --val-labels")
            labels = _read_labels(args.val_labels)
            if labels.size != cross.shape[2]:
                raise ShapeError(f"{labels.size} validation labels for {cross.shape[2]} cross-kernel columns")
            g = _grid_from(args)
            g = evaluation.HyperGrid(g.p_values, g.delta_multipliers, (1.0,))
            res = evaluation.grid_select(lambda wf: bank.with_cross(cross), labels, g, method,
                                         {"tol": args.tol, "max_iter": args.max_iter})
            model = res.model
            _summary(args, {"selected_p": res.p, "selected_delta_mult": res.delta_multiplier,
                            "val_auc": res.auc, "failed_cells": len(res.failures)})
        else:
            model = _fit(method, bank, _config(args, bank.n))
    data_io.save_model(model, args.output, recipe)
    _summary(args, _model_record(model))
    if not _converged(model):
        log.error("solver did not converge; model written with converged=0")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _fit(method, bank, config: MklConfig):
    kw = {"tol": config.tol, "max_iter": config.max_iter}
    return evaluation.fit_method(bank, method, config.p, config.delta, kw)


def _read_labels(path) -> np.ndarray:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            t = line.strip()
            if not t:
                continue
            if t not in ("1", "-1", "1.0", "-1.0"):
                raise FormatError(f"label must be 1 or -1, got {t!r}", lineno)
            out.append(float(t) > 0)
    return np.array(out, dtype=bool)


def cmd_score(args) -> int:
    if bool(args.features) == bool(args.cross):
        raise _Usage("give exactly one of --features or --cross")
    model, recipe = data_io.load_model(args.model, with_recipe=True)
    if isinstance(model, JointMklModel):
        if not 0 <= args.task < len(model.alphas):
            raise _Usage(f"--task must lie in 0..{len(model.alphas) - 1}")
        model = model.task_model(args.task)
    J = len(model.beta) if isinstance(model, MklModel) else max(len(model.kernel_names), 1)
    if args.cross:
        cross = data_io.load_cross_kernels(args.cross)
    else:
        if recipe is None:
            raise ShapeError("model has no kernel recipe (trained on kernels); score with --cross")
        ds = _load_dataset(args, allow_empty=True)
        if ds.n_anomalies and args.label_col is not None:
            X = np.vstack([ds.targets, ds.anomalies])
        else:
            X = ds.targets
        if X.shape[0] == 0:
            cross = np.zeros((len(recipe.views), recipe.train.shape[0], 0))
        else:
            cross = recipe.cross(X)
    if cross.shape[0] != J:
        raise ShapeError(f"model expects {J} kernels, got {cross.shape[0]}")
    if cross.shape[1] != model.alpha.shape[0]:
        raise ShapeError(f"model was trained on n={model.alpha.shape[0]} samples, "
                         f"cross kernels have {cross.shape[1]} rows")
    raw = model.project_bank(cross)
    scores = -np.abs(1.0 - raw)
    lines = []
    for i, (s, r) in enumerate(zip(scores, raw)):
        if args.format == "json-lines":
            rec = {"index": i, "score": float(s)}
            if args.raw:
                rec["projection"] = float(r)
            lines.append(json.dumps(rec, sort_keys=True))
        else:
            lines.append("%.17g %.17g" % (s, r) if args.raw else "%.17g" % s)
    _emit(args, "".join(ln + "\n" for ln in lines))
    log.info("scored %d samples", len(lines))
    return EXIT_OK


def _synthetic_dataset(J: int, seed: int, scale: float) -> data_io.Dataset:
    spec = data_io.SyntheticSpec(J=J, seed=seed).scaled(scale)
    task = data_io.synth_gaussian_task(spec)
    tr, va, te = task.datasets()
    targets = np.vstack([tr.targets, va.targets, te.targets])
    anomalies = np.vstack([va.anomalies, te.anomalies])
    return data_io.Dataset(targets, anomalies, source=f"synthetic-J{J}", views=tr.views)


def cmd_eval(args) -> int:
    if args.synthetic is not None:
        ds = _synthetic_dataset(args.synthetic, args.seed, args.scale)
    else:
        if not args.features:
            raise _Usage("eval needs --features or --synthetic")
        if args.label_col is None:
            raise _Usage("eval needs --label-col to separate targets from anomalies")
        ds = _load_dataset(args)
    log.info("dataset targets=%d anomalies=%d J=%d", ds.n_targets, ds.n_anomalies, len(ds.view_columns()))
    protocol = evaluation.Protocol(args.train_frac, args.val_frac, args.test_frac, args.trials, args.seed)
    report = evaluation.run_trials(ds, protocol, _grid_from(args), _METHODS[args.method],
                                   n_jobs=args.threads or 1)
    _emit(args, evaluation.format_report(report, args.format))
    log.info("mean AUC %.4f +- %.4f over %d trials", report.mean, report.std, report.trials)
    for i, msg in report.errors:
        log.error("trial %d failed: %s", i, msg)
    return EXIT_NUMERICAL if report.errors else EXIT_OK


def cmd_synth(args) -> int:
    spec = data_io.SyntheticSpec(seed=args.seed).scaled(args.scale)
    g = _grid_from(args)
    p_values = args.p_list or (1.0, 2.0)

    def progress(t):
        log.debug("trial %d done", t)

    if args.experiment == "views":
        res = experiments.views_experiment(args.j_range, p_values, args.trials, args.seed, spec,
                                           g.width_factors, g.delta_multipliers, progress)
    else:
        res = experiments.noisy_experiment(args.noise_range, p_values, args.trials, args.seed, 6, spec,
                                           g.width_factors, g.delta_multipliers, args.noise_dim, progress)
    _emit(args, res.table(args.format))
    return EXIT_OK


def cmd_joint_train(args) -> int:
    if not args.output:
        raise _Usage("joint-train needs --output for the model file")
    banks = [data_io.load_kernel_bank(path) for path in args.kernels]
    names = tuple(args.task_names.split(",")) if args.task_names else ()
    tasks = TaskBankSet(tuple(banks), names)
    total = sum(b.n for b in banks)
    config = _config(args, total)
    model = fit_joint(tasks, config)
    data_io.save_model(model, args.output)
    rec = _model_record(model)
    rec["tasks"] = tasks.C
    _summary(args, rec)
    if not model.converged:
        log.error("joint solver did not converge; model written with converged=0")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_bench(args) -> int:
    def on_phase(name, secs):
        log.debug("phase %s %.6f s", name, secs)

    rows = experiments.bench(args.n_list, args.j_list, args.repeats, args.p, args.delta_mult,
                             args.seed, on_phase)
    _emit(args, experiments.bench_table(rows, args.format))
    return EXIT_OK


# -------------------------------------------------------------------- main


def _exit_code(err: Exception) -> int:
    if isinstance(err, (NumericalError, StepSizeError, GridSearchError)):
        return EXIT_NUMERICAL
    if isinstance(err, (FormatError, InvalidDataError, ShapeError, OSError)):
        return EXIT_DATA
    return EXIT_ERROR


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(levelname)s %(message)s", force=True)
    limits = nullcontext()
    if args.threads is not None:
        if args.threads < 1:
            parser.print_usage(sys.stderr)
            log.error("--threads must be >= 1")
            return EXIT_USAGE
        from threadpoolctl import threadpool_limits
        limits = threadpool_limits(args.threads)
    try:
        with limits:
            return args.func(args)
    except _Usage as err:
        parser.print_usage(sys.stderr)
        log.error("%s", err)
        return EXIT_USAGE
    except (MKFNError, OSError) as err:
        log.error("%s: %s", type(err).__name__, err)
        return _exit_code(err)


if __name__ == "__main__":
    sys.exit(main())
