"""Quasi-Newton fitting with diagonal Hessians and Wolfe line search.

Each sweep updates the latent-score block and then the coefficient
block, each along the diagonally preconditioned direction with one
shared step per block chosen by a Wolfe search.  Missing cells can be
handled either by masked sums or by imputing the current fitted means;
the two are identical for the objective and all gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FitConfig, FitReport, ModelParams, ResponseData
from .errors import LineSearchMisuseError
from . import fitting
from .pql import (
    grad_coef,
    grad_u,
    identifiability_transform,
    linear_predictor,
    pql_objective,
    working_state,
)

DIAG_FLOOR = 1e-10
GRAD_ZERO = 1e-12


@dataclass
class LineSearchResult:
    step: float
    armijo_ok: bool
    curvature_ok: bool
    trials: int


def wolfe_line_search(objective_fn, dir_deriv0, c1=1e-4, c2=0.9, shrink=0.5,
                      max_trials=30, deriv_fn=None, step_init=1.0) -> LineSearchResult:
    """Backtracking search over s in (0, step_init].

    objective_fn(s) evaluates the objective along the direction;
    dir_deriv0 is the directional derivative at s = 0 and must be
    negative.  Returns the largest tested step satisfying the Armijo
    condition and (when deriv_fn is given) the strong curvature
    condition; falls back to the best Armijo-satisfying trial, then to
    the smallest tested step.  Never returns 0.
    """
    if dir_deriv0 >= 0:
        raise LineSearchMisuseError("line search requires a descent direction")
    f0 = objective_fn(0.0)
    tiny = 1e-12 * (1.0 + abs(f0))
    s = step_init
    best_armijo = None  # (f, s)
    last = s
    for t in range(1, max_trials + 1):
        fs = objective_fn(s)
        last = s
        if np.isfinite(fs) and fs <= f0 + c1 * s * dir_deriv0 + tiny:
            if deriv_fn is None:
                return LineSearchResult(s, True, False, t)
            ds = deriv_fn(s)
            if abs(ds) <= c2 * abs(dir_deriv0):
                return LineSearchResult(s, True, True, t)
            if best_armijo is None or fs < best_armijo[0]:
                best_armijo = (fs, s)
        s *= shrink
    if best_armijo is not None:
        return LineSearchResult(best_armijo[1], True, False, max_trials)
    return LineSearchResult(last, False, False, max_trials)


def impute_missing(data: ResponseData, params: ModelParams) -> np.ndarray:
    """Y with masked cells replaced by the current fitted means, so dense
    sums and masked sums produce identical gradients."""
    eta = linear_predictor(data, params)
    mu = data.family.inverse_link(eta)
    return np.where(data.mask, data.y, mu)


def _u_block(data, params, config):
    g = grad_u(data, params, config.gamma_u)
    _, _, w = working_state(data, params)
    h = w @ (params.lam**2).T + config.gamma_u  # (n, p)
    floor_hits = int(np.sum(h < DIAG_FLOOR))
    h = np.maximum(h, DIAG_FLOOR)
    return g, h, floor_hits


def _coef_block(data, params, config):
    g0, gb, gl = grad_coef(data, params, config.gamma_lambda)
    _, _, w = working_state(data, params)
    h0 = w.sum(axis=0)  # (m,)
    hb = (data.x**2).T @ w  # (d, m)
    hl = (params.u**2).T @ w + config.gamma_lambda  # (p, m)
    floor_hits = int(np.sum(h0 < DIAG_FLOOR) + np.sum(hb < DIAG_FLOOR)
                     + np.sum(hl < DIAG_FLOOR))
    return (g0, gb, gl), (np.maximum(h0, DIAG_FLOOR), np.maximum(hb, DIAG_FLOOR),
                          np.maximum(hl, DIAG_FLOOR)), floor_hits


def newton_sweep(data: ResponseData, params: ModelParams, config: FitConfig,
                 step_cap: float = 1.0):
    """One quasi-Newton iteration: U block, coefficient block, transform."""
    gamma_u, gamma_lam = config.gamma_u, config.gamma_lambda
    diag = {"diag_floor_hits": 0, "stationary": False}
    params = params.copy()

    # latent-score block
    if params.p > 0:
        g, h, hits = _u_block(data, params, config)
        diag["diag_floor_hits"] += hits
        if np.max(np.abs(g)) > GRAD_ZERO:
            d = -g / h
            dd0 = float(np.sum(g * d))

            def f_u(s):
                trial = params.copy()
                trial.u = params.u + s * d
                return pql_objective(data, trial, gamma_u, gamma_lam)

            def df_u(s):
                trial = params.copy()
                trial.u = params.u + s * d
                return float(np.sum(grad_u(data, trial, gamma_u) * d))

            res = wolfe_line_search(f_u, dd0, config.wolfe_c1, config.wolfe_c2,
                                    config.shrink, config.max_trials,
                                    deriv_fn=df_u, step_init=step_cap)
            params.u = params.u + res.step * d
        else:
            diag["stationary"] = True

    # coefficient block
    (g0, gb, gl), (h0, hb, hl), hits = _coef_block(data, params, config)
    diag["diag_floor_hits"] += hits
    gnorm = max(np.max(np.abs(g0)), np.max(np.abs(gb), initial=0.0),
                np.max(np.abs(gl), initial=0.0))
    if gnorm > GRAD_ZERO:
        d0, db, dl = -g0 / h0, -gb / hb, -gl / hl
        dd0 = float(np.sum(g0 * d0) + np.sum(gb * db) + np.sum(gl * dl))

        def apply_coef(s):
            trial = params.copy()
            trial.beta0 = params.beta0 + s * d0
            trial.b = params.b + s * db
            trial.lam = params.lam + s * dl
            return trial

        def f_c(s):
            return pql_objective(data, apply_coef(s), gamma_u, gamma_lam)

        def df_c(s):
            t0, tb, tl = grad_coef(data, apply_coef(s), gamma_lam)
            return float(np.sum(t0 * d0) + np.sum(tb * db) + np.sum(tl * dl))

        res = wolfe_line_search(f_c, dd0, config.wolfe_c1, config.wolfe_c2,
                                config.shrink, config.max_trials,
                                deriv_fn=df_c, step_init=step_cap)
        params = apply_coef(res.step)
        diag["stationary"] = False
    elif params.p == 0 or diag["stationary"]:
        diag["stationary"] = diag.get("stationary", False) or params.p == 0

    params = identifiability_transform(params, whiten=(config.gamma_lambda == 0))
    return params, diag


def fit_newton(data: ResponseData, config: FitConfig, init: ModelParams | None = None,
               callback=None) -> tuple[ModelParams, FitReport]:
    """Fit by diagonal-Hessian quasi-Newton sweeps with Wolfe line search."""
    return fitting.fit_loop(data, config, init, newton_sweep,
                            callback=callback, method_name="newton")
