"""Command-line interface: ``etmslr {fit,cv,benchmark,simulate}``.

Exit codes: 0 success, 2 usage or data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .baselines import fit_entropy_reg, fit_ridge_logistic
from .data import DataError, PenaltyConfig, fit_standardizer, load_csv, load_labeled_csv, split_train_test
from .em import EmConfig, fit_dslr, fit_pslr
from .evaluation import (
    METHODS,
    SLR_METHODS,
    CvGrid,
    accuracy,
    auc,
    cross_validate,
    default_grids,
    fit_method,
    within_one_percent,
)
from .newton import ConvergenceError
from .simulate import (
    EtmSpec,
    illustration_oracle_sample,
    line_angle,
    mc_consistency,
    mc_efficiency,
    sample_etm,
    sample_gaussian_illustration,
)

REPORT_SCHEMA = "etmslr.report/1"
EXIT_OK, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def _floats(text: str | None):
    if text is None:
        return None
    try:
        return tuple(sorted(float(v) for v in text.split(",") if v.strip()))
    except ValueError:
        raise UsageError(f"cannot parse numeric list {text!r}") from None


def _check_method(m: str) -> str:
    if m not in METHODS:
        raise UsageError(f"unknown method {m!r} (choose from {', '.join(METHODS)})")
    return m


def _rho0(args, data) -> float:
    if args.rho0 in (None, "labeled"):
        return data.rho_labeled
    try:
        v = float(args.rho0)
    except ValueError:
        raise UsageError(f"--rho0 must be 'labeled' or a number, got {args.rho0!r}") from None
    if not 0 < v < 1:
        raise UsageError("--rho0 must lie in (0, 1)")
    return v


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _write(obj, path):
    text = json.dumps(obj, indent=2, default=_default) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and math.isinf(o):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")


def _grid(args, method: str) -> CvGrid:
    base = default_grids(method, args.kind, folds=args.folds)
    return CvGrid(
        lambdas=_floats(args.lambda_grid) or base.lambdas,
        gammas=_floats(args.gamma_grid) or base.gammas,
        lambda_es=_floats(args.lambda_e_grid) or base.lambda_es,
        folds=args.folds,
    )


def _prepare(args):
    data = load_csv(args.data, args.label_col)
    data.require_labeled()
    std = None
    if args.standardize:
        std = fit_standardizer(data)
        data = std.transform_dataset(data)
    return data, std


def _fit_one(method, data, cell, seed, rho0, em_cfg):
    """Fit and return a JSON-friendly summary plus a convergence flag."""
    if method in SLR_METHODS:
        pen = PenaltyConfig(cell.get("lambda", 0.0), cell.get("gamma", 0.0), rho0)
        res = (fit_pslr if method == "pslr" else fit_dslr)(data, pen, cfg=em_cfg)
        out = res.to_dict()
        out["intercept_shift"] = math.log(data.n2 / data.n1)
        return out, res.converged
    if method == "rlr":
        coef = fit_ridge_logistic(data.labeled(), cell.get("lambda", 0.0))
    elif method == "er":
        coef = fit_entropy_reg(data, cell.get("lambda", 0.0), cell.get("lambda_e", 0.0), seed=seed)
    else:
        from .baselines import fit_soft_cem
        coef = fit_soft_cem(data)
    return {"params": {"beta0c": coef.beta0c, "beta1": coef.beta1.tolist()},
            "converged": True}, True


def cmd_fit(args) -> int:
    method = _check_method(args.method)
    data, std = _prepare(args)
    cell = {"lambda": args.lam, "gamma": args.gamma, "lambda_e": args.lambda_e}
    t0 = time.perf_counter()
    fit_out, ok = _fit_one(method, data, cell, args.seed, _rho0(args, data), EmConfig(max_iter=args.max_iter))
    report = {
        "schema": REPORT_SCHEMA,
        "command": "fit",
        "config": _config(args),
        "method": method,
        "counts": dict(zip(("n1", "n2", "n3", "N"), data.counts)),
        "hyperparameters": {**cell, "rho0": _rho0(args, data)},
        **fit_out,
        "standardizer": None if std is None else {"means": std.means, "scales": std.scales},
        "wall_time": time.perf_counter() - t0,
    }
    _write(report, args.output)
    if not ok:
        print("error: fit did not converge", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_cv(args) -> int:
    method = _check_method(args.method)
    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    data, std = _prepare(args)
    grid = _grid(args, method)
    t0 = time.perf_counter()
    em_cfg = EmConfig(max_iter=args.max_iter)
    rep = cross_validate(data, method, grid, args.seed, em_cfg=em_cfg)
    sel = rep.selected_cell
    final, ok = _fit_one(method, data, sel, args.seed, _rho0(args, data), em_cfg)
    report = {
        "schema": REPORT_SCHEMA,
        "command": "cv",
        "config": _config(args),
        "method": method,
        "cv": rep.to_dict(),
        "selected": sel,
        "final_fit": final,
        "wall_time": time.perf_counter() - t0,
    }
    _write(report, args.output)
    return EXIT_OK if ok else EXIT_NUMERIC


def benchmark_run(source, methods, scheme, labeled_size, seed, kind="uci", folds=5,
                  adjust=None, grids=None, em_cfg=EmConfig()):
    """One repetition of the masking protocol; returns per-method accuracy and AUC."""
    semi, test = split_train_test(source, scheme, labeled_size, seed)
    std = fit_standardizer(semi)
    semi, test = std.transform_dataset(semi), std.transform_sample(test)
    adjust = (scheme == "flip") if adjust is None else adjust
    log_ratio = math.log(semi.n2 / semi.n1)
    out = {}
    for mi, m in enumerate(methods):
        grid = (grids or {}).get(m) or default_grids(m, kind, folds)
        cv_seed = int(np.random.SeedSequence([int(seed), mi]).generate_state(1)[0])
        rep = cross_validate(semi, m, grid, cv_seed, em_cfg=em_cfg)
        model = fit_method(m, semi, rep.selected_cell, seed=cv_seed, em_cfg=em_cfg)
        if m in SLR_METHODS:
            prior = 0.0 if adjust else log_ratio
        else:
            prior = -log_ratio if adjust else 0.0
        s = model.scores(test.features, prior_log_odds=prior)
        out[m] = {"accuracy": accuracy(s, test.labels), "auc": auc(s, test.labels),
                  "selected": rep.selected_cell, "prior_log_odds": prior}
    return out


def cmd_benchmark(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be positive")
    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    methods = [_check_method(m.strip()) for m in args.methods.split(",")]
    source = load_labeled_csv(args.data, args.label_col)
    grids = {m: _grid(args, m) for m in methods}
    seeds = np.random.SeedSequence(args.seed).generate_state(args.reps)
    t0 = time.perf_counter()
    runs = []
    for r, s in enumerate(seeds):
        runs.append(benchmark_run(source, methods, args.scheme, args.labeled_size, int(s),
                                  kind=args.kind, folds=args.folds,
                                  adjust=True if args.adjust_intercept else None,
                                  grids=grids, em_cfg=EmConfig(max_iter=args.max_iter)))
    summary = {}
    for m in methods:
        acc = np.array([run[m]["accuracy"] for run in runs])
        au = np.array([run[m]["auc"] for run in runs])
        summary[m] = {
            "accuracy_mean": float(acc.mean()), "accuracy_sd": float(acc.std(ddof=1)) if len(acc) > 1 else 0.0,
            "auc_mean": float(au.mean()), "auc_sd": float(au.std(ddof=1)) if len(au) > 1 else 0.0,
            "accuracy_runs": acc.tolist(), "auc_runs": au.tolist(),
        }
    tally = within_one_percent({m: summary[m]["accuracy_mean"] for m in methods})
    report = {
        "schema": REPORT_SCHEMA,
        "command": "benchmark",
        "config": _config(args),
        "summary": summary,
        "within_1pct_of_highest": tally,
        "runs": runs,
        "wall_time": time.perf_counter() - t0,
    }
    _write(report, args.output)
    return EXIT_OK


def _spec_from_args(args) -> EtmSpec:
    beta1 = np.array(_floats_unsorted(args.beta1))
    p = beta1.size
    sizes = tuple(int(v) for v in _floats_unsorted(args.sizes))
    return EtmSpec(np.zeros(p), np.eye(p), beta1, args.rho_star, sizes)


def _floats_unsorted(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse numeric list {text!r}") from None


def illustration_lines(seed) -> list[dict]:
    """Decision lines for RLR, ER and dSLR at 8 tuning values each, plus the oracle."""
    train, test, scale = sample_gaussian_illustration(seed, return_scale=True)
    log_ratio = math.log(train.n2 / train.n1)
    rows = []
    # oracle lines: 1:1 test proportions (adjusted) and 1:4 as in the labeled data
    oracle = fit_ridge_logistic(test, 0.0)
    oracle_lab = fit_ridge_logistic(
        illustration_oracle_sample(np.random.SeedSequence([int(seed), 1]), (800, 3200), scale), 0.0)
    rows.append(("oracle", "none", 0.0, False, oracle_lab.beta0c, *oracle_lab.beta1))
    rows.append(("oracle", "none", 0.0, True, oracle.beta0c, *oracle.beta1))
    for lam in 10.0 ** np.linspace(-5, -1, 8):
        c = fit_ridge_logistic(train.labeled(), lam)
        rows.append(("rlr", "lambda", lam, False, c.beta0c, *c.beta1))
        rows.append(("rlr", "lambda", lam, True, c.beta0c - log_ratio, *c.beta1))
    for le in np.linspace(0.01, 1, 8):
        c = fit_entropy_reg(train, 0.0, le, seed=seed)
        rows.append(("er", "lambda_e", le, False, c.beta0c, *c.beta1))
        rows.append(("er", "lambda_e", le, True, c.beta0c - log_ratio, *c.beta1))
    for g in 10.0 ** np.linspace(-4, 0, 8):
        res = fit_dslr(train, PenaltyConfig(0.0, g, train.rho_labeled), cfg=EmConfig(max_iter=5000))
        b = res.params
        rows.append(("dslr", "gamma", g, False, b.beta0 + log_ratio, *b.beta1))
        rows.append(("dslr", "gamma", g, True, b.beta0, *b.beta1))
    out = []
    for m, name, val, adj, b0, b1, b2 in rows:
        angle = line_angle([b1, b2], (oracle if adj else oracle_lab).beta1)
        out.append({"method": m, "tuning": name, "value": float(val), "adjusted": adj,
                    "intercept": float(b0), "coef1": float(b1), "coef2": float(b2),
                    "angle_to_oracle": angle})
    return out


def cmd_simulate(args) -> int:
    if args.reps is not None and args.reps < 1:
        raise UsageError("--reps must be positive")
    exp = args.experiment
    t0 = time.perf_counter()
    report = {"schema": REPORT_SCHEMA, "command": "simulate", "config": _config(args),
              "experiment": exp}
    if exp == "etm":
        spec = _spec_from_args(args)
        data = sample_etm(spec, args.seed)
        if args.csv:
            _write_semi_csv(data, args.csv)
        report["spec"] = spec.to_dict()
        report["counts"] = dict(zip(("n1", "n2", "n3", "N"), data.counts))
    elif exp == "illustration":
        lines = illustration_lines(args.seed)
        path = args.csv or (None if args.output in (None, "-") else str(Path(args.output).with_suffix(".lines.csv")))
        if path:
            with open(path, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(lines[0]))
                w.writeheader()
                w.writerows(lines)
        report["lines"] = lines
    elif exp == "consistency":
        spec = _spec_from_args(args)
        scales = [int(s) for s in _floats_unsorted(args.scales)]
        mc = mc_consistency(spec, scales, reps=args.reps or 100, seed=args.seed)
        if args.csv:
            mc.write_csv(args.csv)
        report["mc"] = mc.to_dict()
        report["error_table"] = {k: v["mae"] for k, v in mc.summary.items()}
    elif exp == "efficiency":
        spec = _spec_from_args(args)
        mc = mc_efficiency(spec, reps=args.reps or 500, seed=args.seed)
        if args.csv:
            mc.write_csv(args.csv)
        report["mc"] = mc.to_dict()
    else:
        raise UsageError(f"unknown experiment {exp!r}")
    report["wall_time"] = time.perf_counter() - t0
    _write(report, args.output)
    return EXIT_OK


def _write_semi_csv(data, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(data.p)] + ["y"])
        for x, lab in ((data.x1, "0"), (data.x2, "1"), (data.x3, "")):
            for row in x:
                w.writerow([repr(float(v)) for v in row] + [lab])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="etmslr", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--output", default="-")
        if data:
            p.add_argument("--data", required=True)
            p.add_argument("--label-col", default="y")
            p.add_argument("--max-iter", type=int, default=500)

    def tuning(p):
        p.add_argument("--lambda-grid")
        p.add_argument("--gamma-grid")
        p.add_argument("--lambda-e-grid")
        p.add_argument("--folds", type=int, default=5)
        p.add_argument("--kind", default="uci", choices=("uci", "ssl"))

    p = sub.add_parser("fit", help="fit one method at fixed tuning values")
    common(p)
    p.add_argument("--method", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--lambda-e", type=float, default=0.0)
    p.add_argument("--rho0", default="labeled")
    p.add_argument("--standardize", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", help="cross-validate tuning values, then refit")
    common(p)
    tuning(p)
    p.add_argument("--method", required=True)
    p.add_argument("--rho0", default="labeled")
    p.add_argument("--standardize", action="store_true")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("benchmark", help="repeated split / tune / test protocol")
    common(p)
    tuning(p)
    p.add_argument("--methods", default="rlr,er,pslr,dslr")
    p.add_argument("--scheme", default="homo", choices=("homo", "flip"))
    p.add_argument("--labeled-size", type=int, default=100)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--adjust-intercept", action="store_true")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("simulate", help="synthetic data and Monte Carlo experiments")
    common(p, data=False)
    p.add_argument("--experiment", required=True)
    p.add_argument("--rho-star", type=float, default=0.3)
    p.add_argument("--beta1", default="1,-1")
    p.add_argument("--sizes", default="250,250,500")
    p.add_argument("--scales", default="1,4,16")
    p.add_argument("--reps", type=int)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
