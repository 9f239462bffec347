"""Command-line surface: fit, predict, eval, cv, simulate, scree.

Exit codes: 0 success (fit converged), 3 fit hit the iteration cap,
1 input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import evaluate
from .airwls import fit_airwls
from .data import (
    FitConfig,
    ResponseData,
    filter_sparse,
    load_csv_matrix,
    load_model,
    save_csv_matrix,
    save_model,
)
from .errors import GmfError, InputError, NumericalError
from .families import get_family
from .newton import fit_newton
from .pql import linear_predictor
from .simulate import simulate_dataset

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2
EXIT_MAX_ITER = 3


def _resolve_threads(value) -> int:
    if value is None:
        value = os.environ.get("GMF_THREADS", "1")
    t = int(value)
    if t == 0:
        t = os.cpu_count() or 1
    if t < 0:
        raise InputError("--threads must be >= 0")
    return t


def _load_response(args) -> ResponseData:
    family = get_family(args.family)
    y, mask = load_csv_matrix(args.y, args.na_token)
    x = None
    if getattr(args, "x", None):
        x, x_mask = load_csv_matrix(args.x, args.na_token)
        if not x_mask.all():
            raise InputError("covariate matrix may not contain missing cells")
    data = ResponseData(y, mask, x, family)
    threshold = getattr(args, "filter_threshold", None)
    if threshold:
        data, _, _ = filter_sparse(data, threshold)
    return data


def _parse_grid_int(text: str) -> list[int]:
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",") if t]


def _parse_grid_float(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t]


def _config_from_args(args) -> FitConfig:
    if args.rank < 1:
        raise InputError("rank must be >= 1")
    config = FitConfig(
        method=args.method,
        rank=args.rank,
        gamma_u=args.gamma_u,
        gamma_lambda=args.gamma_lambda,
        tol=args.tol,
        max_iter=args.max_iter,
        seed=args.seed,
        threads=_resolve_threads(args.threads),
    )
    config.parallel = config.threads > 1
    config.validate()
    return config


def cmd_fit(args) -> int:
    data = _load_response(args)
    config = _config_from_args(args)
    fit = fit_airwls if config.method == "airwls" else fit_newton
    params, report = fit(data, config)
    save_model(params, report, args.out)
    report_path = args.report or (os.path.splitext(args.out)[0] + ".report.json")
    with open(report_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    print(f"fit: {config.method} iterations={report.iterations} "
          f"deviance={report.deviance:.6g} converged={report.converged}")
    return EXIT_OK if report.converged else EXIT_MAX_ITER


def _predictions(args):
    params, meta = load_model(args.model)
    family_token = meta.get("family") if isinstance(meta, dict) else None
    if family_token is None:
        family_token = meta.get("diagnostics", {}).get("family", "gaussian")
    family = get_family(family_token)
    n, m = params.u.shape[0], params.beta0.shape[0]
    if getattr(args, "x", None):
        x, _ = load_csv_matrix(args.x, args.na_token)
    else:
        x = np.zeros((n, 0))
    data = ResponseData(np.zeros((n, m)), np.ones((n, m), dtype=bool), x, family)
    eta = linear_predictor(data, params)
    mu = family.inverse_link(eta)
    return params, family, eta, mu


def cmd_predict(args) -> int:
    _, _, eta, mu = _predictions(args)
    save_csv_matrix(mu, args.out)
    if args.link_scale:
        save_csv_matrix(eta, os.path.splitext(args.out)[0] + ".eta.csv")
    print(f"predict: wrote {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    params, meta = load_model(args.model)
    family_token = (meta.get("family")
                    or meta.get("diagnostics", {}).get("family"))
    family = get_family(family_token or args.family)
    y, y_mask = load_csv_matrix(args.y, args.na_token)
    x = None
    if args.x:
        x, _ = load_csv_matrix(args.x, args.na_token)
    data = ResponseData(y, y_mask, x, family)
    mask = y_mask
    if args.mask:
        hold, _ = load_csv_matrix(args.mask, args.na_token)
        mask = (hold > 0.5) & y_mask
    eta = linear_predictor(data, params)
    mu = family.clamp_mean(family.inverse_link(eta))
    metrics = {
        "deviance": evaluate.deviance(data, mu, params.phi, mask),
        "null_deviance_fraction": evaluate.null_deviance_fraction(
            data, mu, params.phi, mask),
    }
    if family.name == "bernoulli":
        metrics["auc"] = evaluate.auc(data.y[mask], mu[mask])
    with open(args.out, "w") as fh:
        json.dump(metrics, fh, indent=2)
    print(json.dumps(metrics))
    return EXIT_OK


def cmd_cv(args) -> int:
    data = _load_response(args)
    threads = _resolve_threads(args.threads)
    configs = []
    base = dict(method=args.method, tol=args.tol, max_iter=args.max_iter,
                seed=args.seed, threads=1)
    if args.grid_rank:
        for p in _parse_grid_int(args.grid_rank):
            configs.append(FitConfig(rank=p, gamma_u=args.gamma_u,
                                     gamma_lambda=args.gamma_lambda, **base))
    if args.grid_gamma:
        for g in _parse_grid_float(args.grid_gamma):
            configs.append(FitConfig(rank=args.rank, gamma_u=g, gamma_lambda=g,
                                     **base))
    if not configs:
        raise InputError("provide --grid-rank and/or --grid-gamma")
    for c in configs:
        c.validate()
    table = evaluate.cross_validate(data, configs, args.folds, args.seed,
                                    threads=threads)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "gamma_u", "gamma_lambda",
                         "mean_holdout_deviance", "sd_holdout_deviance"])
        for row in table.rows:
            writer.writerow([row.config.rank, row.config.gamma_u,
                             row.config.gamma_lambda,
                             f"{row.mean_deviance:.17g}",
                             f"{row.sd_deviance:.17g}"])
    best = table.best_config
    print(f"best: rank={best.rank} gamma_u={best.gamma_u} "
          f"gamma_lambda={best.gamma_lambda} "
          f"mean_deviance={table.rows[table.best_index].mean_deviance:.6g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    family = get_family(args.family)
    sigma_x = sigma_lam = None
    if args.sigma_x:
        sigma_x, _ = load_csv_matrix(args.sigma_x, args.na_token)
    if args.sigma_lambda:
        sigma_lam, _ = load_csv_matrix(args.sigma_lambda, args.na_token)
    data, truth = simulate_dataset(args.n, args.m, args.p, args.d, family,
                                   sigma_x=sigma_x, sigma_lambda=sigma_lam,
                                   seed=args.seed, beta0=args.beta0)
    os.makedirs(args.out_dir, exist_ok=True)
    save_csv_matrix(data.y, os.path.join(args.out_dir, "y.csv"))
    if data.d:
        save_csv_matrix(data.x, os.path.join(args.out_dir, "x.csv"))
    save_model(truth, {"family": family.name}, os.path.join(args.out_dir, "truth.json"))
    print(f"simulate: wrote {args.out_dir}")
    return EXIT_OK


def cmd_scree(args) -> int:
    params, _ = load_model(args.model)
    values = evaluate.scree_values(params.lam)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        for v in values:
            writer.writerow([f"{v:.17g}"])
    print("scree: " + ",".join(f"{v:.4g}" for v in values))
    return EXIT_OK


def _add_common_fit_flags(sp):
    sp.add_argument("--gamma-u", type=float, default=1.0, dest="gamma_u")
    sp.add_argument("--gamma-lambda", type=float, default=0.0, dest="gamma_lambda")
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.add_argument("--max-iter", type=int, default=500, dest="max_iter")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmf",
        description="Generalized matrix factorization (GLLVM fitting)")
    parser.add_argument("--na-token", default="NA", dest="na_token")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model to a response matrix")
    fit.add_argument("--y", required=True)
    fit.add_argument("--x")
    fit.add_argument("--family", required=True,
                     choices=["gaussian", "poisson", "bernoulli"])
    fit.add_argument("--rank", type=int, required=True)
    fit.add_argument("--method", choices=["airwls", "newton"], default="airwls")
    fit.add_argument("--filter-threshold", type=float, default=None,
                     dest="filter_threshold")
    _add_common_fit_flags(fit)
    fit.add_argument("--out", required=True)
    fit.add_argument("--report")
    fit.set_defaults(func=cmd_fit)

    pred = sub.add_parser("predict", help="write fitted means for a saved model")
    pred.add_argument("--model", required=True)
    pred.add_argument("--x")
    pred.add_argument("--out", required=True)
    pred.add_argument("--link-scale", action="store_true", dest="link_scale")
    pred.set_defaults(func=cmd_predict)

    ev = sub.add_parser("eval", help="evaluate a saved model against responses")
    ev.add_argument("--y", required=True)
    ev.add_argument("--x")
    ev.add_argument("--model", required=True)
    ev.add_argument("--mask", help="CSV of 0/1; restrict metrics to these cells")
    ev.add_argument("--family", default=None)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_eval)

    cv = sub.add_parser("cv", help="cell-wise k-fold cross-validation over a grid")
    cv.add_argument("--y", required=True)
    cv.add_argument("--x")
    cv.add_argument("--family", required=True,
                    choices=["gaussian", "poisson", "bernoulli"])
    cv.add_argument("--method", choices=["airwls", "newton"], default="newton")
    cv.add_argument("--rank", type=int, default=10,
                    help="working rank bound for the gamma grid")
    cv.add_argument("--grid-rank", dest="grid_rank",
                    help="a:b inclusive range or comma list of ranks")
    cv.add_argument("--grid-gamma", dest="grid_gamma",
                    help="comma list of equal-penalty gamma values")
    cv.add_argument("--folds", type=int, default=20)
    cv.add_argument("--filter-threshold", type=float, default=None,
                    dest="filter_threshold")
    _add_common_fit_flags(cv)
    cv.add_argument("--out", required=True)
    cv.set_defaults(func=cmd_cv)

    sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--m", type=int, required=True)
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--d", type=int, default=0)
    sim.add_argument("--family", required=True,
                     choices=["gaussian", "poisson", "bernoulli"])
    sim.add_argument("--sigma-x", dest="sigma_x")
    sim.add_argument("--sigma-lambda", dest="sigma_lambda")
    sim.add_argument("--beta0", type=float, default=0.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out-dir", required=True, dest="out_dir")
    sim.set_defaults(func=cmd_simulate)

    scree = sub.add_parser("scree", help="write scree values of a saved model")
    scree.add_argument("--model", required=True)
    scree.add_argument("--out", required=True)
    scree.set_defaults(func=cmd_scree)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"gmf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (GmfError, OSError) as exc:
        print(f"gmf: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
