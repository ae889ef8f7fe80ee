"""Command-line interface.

Subcommands: ``fit``, ``bench``, ``lab``, ``path`` and ``oracle``.  Every JSON
output carries ``"schema": "1"`` and the resolved configuration; every CSV
output starts with one ``#`` comment line holding the same information (read
with ``pandas.read_csv(path, comment="#")``).

Exit codes: 0 success, 2 bad flags or configuration, 3 unreadable or invalid
data, 4 divergence or numerical failure, 5 problem too large for the oracle.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .datagen import load_csv
from .errors import (ConfigError, DimensionMismatch, Diverged, EmptyList, InsufficientData,
                     MissingTarget, NonFiniteData, NumericalFailure, ParseError, TooLarge)
from .estimators import EstimatorKind
from .experiments import (EXPERIMENTS, ExperimentSetup, Method, bayes_objective,
                          response_scaled_lambda, run_trials, setup)
from .lab import multivariate_unbiasedness, ordering_check, univariate_unbiasedness, variance_curves
from .metrics import METRIC_NAMES, aggregate, evaluate
from .model import ObjectiveConfig
from .optimizer import (LambdaGrid, OptimizerConfig, bic_lambda, cross_validate, fit,
                        prediction_error, regularization_path, split_indices)
from .oracles import exhaustive_best_subset

SCHEMA = "1"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_TOO_LARGE = 0, 2, 3, 4, 5

TRIAL_COLUMNS = ("experiment", "method", "trial", "seed", "n", "p", "rho", "snr", "sigma",
                 *METRIC_NAMES, "penalty", "converged", "iters", "runtime_sec", "extremes")


class UsageError(Exception):
    pass


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list:
    return [v.strip().lower() for v in text.split(",") if v.strip()]


def _add_data_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("data")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="CSV file with a header row")
    src.add_argument("--synthetic", choices=EXPERIMENTS, help="generate a benchmark dataset")
    g.add_argument("--target", help="response column of --data")
    g.add_argument("--truth", type=Path, help="sidecar CSV (index, beta_star) for --data")
    g.add_argument("--no-standardize", action="store_true", help="keep CSV covariates as read")
    g.add_argument("--intercept", action="store_true", help="append an unpenalized intercept")
    g.add_argument("--n", type=int)
    g.add_argument("--p", type=int)
    g.add_argument("--S", type=int, dest="S")
    g.add_argument("--rho", type=float)
    g.add_argument("--sigma", type=float)
    g.add_argument("--snr", type=float)
    g.add_argument("--data-seed", type=int, help="dataset seed (defaults to --seed)")


def _add_fit_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("optimizer")
    g.add_argument("--estimator", choices=[k.value for k in EstimatorKind], default="u2g")
    g.add_argument("--objective", choices=["freq", "vi"], default="freq")
    g.add_argument("--lambda0", type=float, default=0.0, help="prior logit for --objective vi")
    g.add_argument("--k", type=int, help="Monte Carlo draws per step")
    g.add_argument("--step", type=float, help="SGD step size; must stay below 2/lambda")
    g.add_argument("--max-iter", type=int)
    g.add_argument("--init-pi", type=float)
    g.add_argument("--extreme-band", type=float,
                   help="also require every probability within this distance of 0 or 1 to stop")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, default=Path("."))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="subsetgrad", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit one model",
                       description="Writes result.json and coefficients.csv "
                                   "(index, name, beta_hat, pi_final).  Without --lambda or "
                                   "--cv the penalty is log(n)/(2n).")
    _add_data_flags(f)
    _add_fit_flags(f)
    lam = f.add_mutually_exclusive_group()
    lam.add_argument("--lambda", type=float, dest="lam")
    lam.add_argument("--cv", action="store_true", help="pick the penalty by validation error")

    b = sub.add_parser("bench", help="repeated trials of a benchmark experiment",
                       description="Writes trials.csv (one row per trial and method: "
                                   + ", ".join(TRIAL_COLUMNS) + ") and summary.json.")
    b.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    b.add_argument("--trials", type=int, default=20)
    b.add_argument("--estimators", type=_names, default=["u2g"])
    b.add_argument("--objective", type=_names, default=["freq"], help="comma list of freq, vi")
    b.add_argument("--snr-grid", type=_floats)
    b.add_argument("--rho-grid", type=_floats)
    b.add_argument("--n-grid", type=_floats)
    b.add_argument("--seed", type=int, default=0, help="offset added to trial indices")
    b.add_argument("--workers", type=int, help="worker processes (capped by SUBSETGRAD_THREADS)")
    b.add_argument("--out", type=Path, default=Path("."))

    lb = sub.add_parser("lab", help="estimator diagnostics",
                        description="unbiasedness -> lab_unbiasedness.csv; variance-curves -> "
                                    "lab_variance.csv; ordering -> lab_ordering.csv.")
    lb.add_argument("--mode", choices=["unbiasedness", "variance-curves", "ordering"], required=True)
    lb.add_argument("--pi-grid", type=_floats)
    lb.add_argument("--f0", type=float, default=4.0)
    lb.add_argument("--f1", type=float, default=5.0)
    lb.add_argument("--draws", type=int, default=100_000)
    lb.add_argument("--p", type=int, default=8, help="width of the multivariate check")
    lb.add_argument("--triples", type=int, default=50)
    lb.add_argument("--seed", type=int, default=0)
    lb.add_argument("--out", type=Path, default=Path("."))

    pa = sub.add_parser("path", help="regularization path",
                        description="Writes path.csv (lambda, nonzero, val_error, converged, "
                                    "iters, beta_0 ... beta_{p-1}).")
    _add_data_flags(pa)
    _add_fit_flags(pa)
    pa.add_argument("--grid", help="comma list of penalties, or lo:hi:count (geometric)")

    o = sub.add_parser("oracle", help="exhaustive best subset (p <= 20)",
                       description="Writes oracle.json; --compare also runs a gradient fit.")
    _add_data_flags(o)
    _add_fit_flags(o)
    o.add_argument("--lambda", type=float, dest="lam")
    o.add_argument("--compare", action="store_true")
    return ap


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and not isinstance(obj, (int, str)):
        return obj.value
    return obj


def _config_echo(args) -> dict:
    return _jsonable({k: v for k, v in vars(args).items() if k != "func"})


def _write_json(path: Path, payload: dict):
    body = {"schema": SCHEMA, **payload}
    path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: list, rows: list, config: dict):
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps({"schema": SCHEMA, "config": config}, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(r.get(h, "")) for h in header])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return v


def _workers(requested: Optional[int]) -> int:
    cap = os.environ.get("SUBSETGRAD_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise UsageError("SUBSETGRAD_THREADS must be an integer") from None
    return max(1, n)


def _synthetic_setup(args) -> ExperimentSetup:
    overrides = {}
    for key in ("n", "p", "S", "rho", "sigma", "snr"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    if args.synthetic == "cs":
        overrides.pop("rho", None)
        overrides.pop("snr", None)
    return setup(args.synthetic, **overrides)


def _load(args):
    """Return ``(train, validation, setup)``; validation may be ``None``."""
    if args.data is not None:
        if not args.target:
            raise UsageError("--data needs --target")
        try:
            data = load_csv(args.data, args.target, standardize=not args.no_standardize,
                            intercept=args.intercept, truth_path=args.truth)
        except FileNotFoundError:
            raise DataError(f"cannot open {args.data}") from None
        data.check_finite()
        return data, None, None
    su = _synthetic_setup(args)
    seed = args.seed if args.data_seed is None else args.data_seed
    su = replace(su, seed_offset=seed)
    data = su.dataset(0)
    return data, su.validation_set(0, data), su


class DataError(Exception):
    pass


def _optimizer_config(args, su: Optional[ExperimentSetup]) -> OptimizerConfig:
    base = su.optimizer if su is not None else OptimizerConfig()
    changes = {"estimator": EstimatorKind(args.estimator), "seed": args.seed}
    for flag, field_name in (("k", "K"), ("step", "step"), ("max_iter", "max_iters"),
                             ("init_pi", "init_pi"), ("extreme_band", "extreme_band")):
        v = getattr(args, flag)
        if v is not None:
            changes[field_name] = v
    return base.replace(**changes)


def _objective(args, data, cfg, lam) -> ObjectiveConfig:
    if args.objective == "vi":
        return bayes_objective(data, cfg, args.lambda0)
    return ObjectiveConfig.frequentist(lam)


def _split_for_validation(data, seed):
    tr, va, te = split_indices(data.n, seed=seed)
    return data.subset_rows(tr), data.subset_rows(va), data.subset_rows(te)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    data, val, su = _load(args)
    cfg = _optimizer_config(args, su)
    test = None
    cv_table = None
    if args.cv:
        train = data
        if val is None:
            train, val, test = _split_for_validation(data, args.seed)
        if args.objective == "vi":
            obj = _objective(args, train, cfg, None)
            grid = tuple((su.vi_grid if su else (0.0, 1.0, 2.0, 4.0, 8.0)))
        else:
            obj = ObjectiveConfig.frequentist(response_scaled_lambda(train))
            grid = LambdaGrid(obj.lam, *( (su.grid_span, su.grid_count) if su else (10.0, 9)))
        cv = cross_validate(train, obj, cfg, grid, val_data=val)
        res, cv_table = cv.best, cv.table
        fitted_on = train
    else:
        lam = args.lam if args.lam is not None else bic_lambda(data.n)
        if args.objective == "freq":
            cfg.resolved_step(ObjectiveConfig.frequentist(lam))
        obj = _objective(args, data, cfg, lam)
        res = fit(data, obj, cfg)
        fitted_on = data
    payload = {"command": "fit", "config": _config_echo(args), "seed": args.seed,
               "optimizer": _jsonable(vars(cfg)) if hasattr(cfg, "__dict__") else None,
               "backend": kernels.BACKEND, "result": res.summary(),
               "metrics": None, "cv": cv_table, "wall_time_sec": time.perf_counter() - t0}
    if data.truth is not None and data.covariance is not None:
        payload["metrics"] = evaluate(res.z_hat, res.beta_hat, data.truth, data.covariance,
                                      args.seed).as_dict()
    if val is not None:
        payload["val_error"] = prediction_error(val, res.beta_hat)
    if test is not None:
        payload["test_error"] = prediction_error(test, res.beta_hat)
    payload["train_error"] = prediction_error(fitted_on, res.beta_hat)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "result.json", payload)
    names = data.column_names or [f"x{j + 1}" for j in range(data.p)]
    rows = [{"index": j, "name": names[j], "beta_hat": res.beta_hat[j], "pi_final": res.pi_final[j]}
            for j in range(data.p)]
    _write_csv(args.out / "coefficients.csv", ["index", "name", "beta_hat", "pi_final"], rows,
               _config_echo(args))
    print(f"selected {res.z_hat.k} of {data.p} covariates; converged={res.converged} "
          f"after {res.iters} iterations")
    return EXIT_OK


def _bench_cells(args) -> list:
    cells = [{}]
    for flag, key in (("snr_grid", "snr"), ("rho_grid", "rho"), ("n_grid", "n")):
        vals = getattr(args, flag)
        if vals:
            cells = [dict(c, **{key: (int(v) if key == "n" else v)}) for c in cells for v in vals]
    return cells


def cmd_bench(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    methods = []
    for est in args.estimators:
        for objective in args.objective:
            if objective not in ("freq", "vi"):
                raise UsageError(f"unknown objective {objective!r}")
            methods.append(Method.parse(est + ("-vi" if objective == "vi" else "")))
    workers = _workers(args.workers)
    rows = []
    summary = []
    for cell in _bench_cells(args):
        if args.experiment == "cs" and ("snr" in cell or "rho" in cell):
            raise UsageError("the sensing experiment has no snr or rho to sweep")
        su = replace(setup(args.experiment, **cell), seed_offset=args.seed)
        records = run_trials(su, methods, args.trials, workers)
        spec = su.data
        info = {"n": spec.n, "p": spec.p, "rho": getattr(spec, "rho", float("nan")),
                "snr": getattr(spec, "snr", None), "sigma": getattr(spec, "sigma", None)}
        for r in records:
            rows.append({**r.row(), **info})
        for m in methods:
            mine = [r for r in records if r.method == m.name]
            agg = aggregate(r.metrics for r in mine)
            runtimes = np.array([r.runtime for r in mine])
            summary.append({"cell": cell, "method": m.name, **info, "metrics": agg,
                            "runtime_sec": {"mean": float(runtimes.mean()), "count": len(mine)},
                            "setup": su.describe()})
    args.out.mkdir(parents=True, exist_ok=True)
    config = _config_echo(args)
    _write_csv(args.out / "trials.csv", list(TRIAL_COLUMNS), rows, config)
    _write_json(args.out / "summary.json", {"command": "bench", "config": config,
                                            "seed": args.seed, "backend": kernels.BACKEND,
                                            "cells": summary})
    for s in summary:
        print(f"{s['method']:>10} {json.dumps(s['cell'])}: F1 {s['metrics']['f1']['mean']:.3f} "
              f"RR {s['metrics']['rr']['mean']:.4f}")
    return EXIT_OK


def cmd_lab(args) -> int:
    config = _config_echo(args)
    args.out.mkdir(parents=True, exist_ok=True)
    if args.draws < 1000:
        raise UsageError("--draws must be at least 1000")
    if args.mode == "variance-curves":
        grid = args.pi_grid or list(np.round(np.linspace(0.02, 0.98, 49), 6))
        rows = variance_curves(grid, args.f0, args.f1, args.draws, args.seed)
        path = args.out / "lab_variance.csv"
    elif args.mode == "unbiasedness":
        grid = args.pi_grid or [0.1, 0.3, 0.5, 0.7, 0.9]
        uni = univariate_unbiasedness(grid, args.f0, args.f1)
        multi = multivariate_unbiasedness(args.p, args.draws, args.seed or 3)
        rows = [{"kind": "univariate", **r} for r in uni] + [{"kind": "multivariate", **r} for r in multi]
        path = args.out / "lab_unbiasedness.csv"
        print(f"max |MC mean - enumerated gradient| / SE = {max(r['z'] for r in multi):.3f}")
    else:
        rows = ordering_check(args.triples, args.draws, args.seed)
        path = args.out / "lab_ordering.csv"
        print(f"{sum(r['passed'] for r in rows)} of {len(rows)} triples pass")
    header = list(dict.fromkeys(k for r in rows for k in r))
    _write_csv(path, header, rows, config)
    return EXIT_OK


def _parse_grid(text: Optional[str], base: float) -> LambdaGrid:
    if not text:
        return LambdaGrid(base, 10.0, 9)
    if ":" in text:
        try:
            lo, hi, count = text.split(":")
            lo, hi, count = float(lo), float(hi), int(count)
        except ValueError:
            raise UsageError(f"--grid {text!r}: expected lo:hi:count") from None
        if not 0 < lo <= hi or count < 1:
            raise UsageError("--grid needs 0 < lo <= hi and count >= 1")
        return LambdaGrid.explicit(np.geomspace(hi, lo, count))
    try:
        return LambdaGrid.explicit([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"--grid {text!r}: expected comma-separated numbers") from None


def cmd_path(args) -> int:
    data, val, su = _load(args)
    cfg = _optimizer_config(args, su)
    train = data
    if val is None:
        train, val, _ = _split_for_validation(data, args.seed)
    grid = _parse_grid(args.grid, response_scaled_lambda(train))
    if args.objective == "vi":
        raise UsageError("path supports the frequentist objective only")
    records = regularization_path(train, ObjectiveConfig.frequentist(grid.base), cfg, grid, val)
    header = ["lambda", "nonzero", "val_error", "converged", "iters"] + [f"beta_{j}" for j in range(data.p)]
    rows = []
    for r in records:
        row = {"lambda": r.lam, "nonzero": r.nonzero, "val_error": r.val_error,
               "converged": r.converged, "iters": r.iters}
        row.update({f"beta_{j}": r.beta_hat[j] for j in range(data.p)})
        rows.append(row)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_csv(args.out / "path.csv", header, rows, _config_echo(args))
    print(f"{len(records)} path points written")
    return EXIT_OK


def cmd_oracle(args) -> int:
    data, _, su = _load(args)
    lam = args.lam if args.lam is not None else bic_lambda(data.n)
    z, value = exhaustive_best_subset(data, lam)
    payload = {"command": "oracle", "config": _config_echo(args), "seed": args.seed,
               "lambda": lam, "z_opt": z.z.tolist(), "support": z.active.tolist(), "value": value,
               "agreement": None}
    if args.compare:
        cfg = _optimizer_config(args, su)
        res = fit(data, ObjectiveConfig.frequentist(lam), cfg)
        payload["fit_support"] = res.z_hat.active.tolist()
        payload["agreement"] = bool(np.array_equal(res.z_hat.z, z.z))
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "oracle.json", payload)
    print(f"optimal support {z.active.tolist()} with objective {value:.6g}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "bench": cmd_bench, "lab": cmd_lab, "path": cmd_path, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ParseError, MissingTarget, NonFiniteData, DimensionMismatch,
            InsufficientData, EmptyList, FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (Diverged, NumericalFailure) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TooLarge as exc:
        print(f"too large: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE


if __name__ == "__main__":
    sys.exit(main())
