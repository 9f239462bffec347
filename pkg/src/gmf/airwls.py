"""Alternating IRWLS: penalized ridge sweeps over rows (latent scores)
alternated with unpenalized IRWLS sweeps over columns (intercepts,
coefficients, loadings).

Sweeps are Jacobi: every row update reads the same pre-sweep state, and
every column update reads the state after the full row sweep.  This
makes parallel execution deterministic and equal to sequential.
"""

from __future__ import annotations

import numpy as np

from .data import FitConfig, FitReport, ModelParams, ResponseData
from .errors import ColumnDegenerateError, RidgeSingularError
from . import fitting
from .pql import identifiability_transform, working_state

WEIGHT_FLOOR = 1e-10


def row_update(y_row, mask_row, lam, phi, eta_offset_row, u_old,
               gamma_u, step, family):
    """One penalized IRWLS step for a single row's latent scores.

    eta_offset_row holds beta0_j + x_i . b_j per cell; weights come from
    the current mu and are floored at WEIGHT_FLOOR before inversion in
    the working response.
    """
    y_row = np.asarray(y_row, dtype=float)
    mask_row = np.asarray(mask_row, dtype=bool)
    eta = family.clamp_eta(np.asarray(eta_offset_row, dtype=float) + lam.T @ u_old)
    mu = family.inverse_link(eta)
    w = np.where(mask_row, family.variance(mu) / phi, 0.0)
    w_safe = np.maximum(w, WEIGHT_FLOOR)
    z = lam.T @ u_old + np.where(mask_row, (y_row - mu) / phi, 0.0) / w_safe
    h = (lam * w[None, :]) @ lam.T + gamma_u * np.eye(lam.shape[0])
    rhs = lam @ (w * z)
    try:
        sol = np.linalg.solve(h, rhs)
    except np.linalg.LinAlgError:
        raise RidgeSingularError("row system singular (gamma_u = 0)") from None
    return u_old + step * (sol - u_old)


def col_update(y_col, mask_col, x_aug, u, phi_j, coef_old, gamma_lambda, step,
               family):
    """One IRWLS step for one response column's (beta0, beta, lambda).

    x_aug is the covariate part of the design including the leading ones
    column; the latent scores complete the design.  Only the lambda block
    is penalized.
    """
    design = np.hstack([x_aug, u])
    q = design.shape[1]
    p = u.shape[1]
    eta = family.clamp_eta(design @ coef_old)
    mu = family.inverse_link(eta)
    w = np.where(np.asarray(mask_col, dtype=bool), family.variance(mu) / phi_j, 0.0)
    w_safe = np.maximum(w, WEIGHT_FLOOR)
    z = design @ coef_old + np.where(mask_col, (y_col - mu) / phi_j, 0.0) / w_safe
    penalty = np.zeros(q)
    penalty[q - p:] = gamma_lambda
    h = (design * w[:, None]).T @ design + np.diag(penalty)
    rhs = design.T @ (w * z)
    try:
        sol = np.linalg.solve(h, rhs)
    except np.linalg.LinAlgError:
        raise ColumnDegenerateError(-1) from None
    return coef_old + step * (sol - coef_old)


def _row_sweep(data: ResponseData, params: ModelParams, config: FitConfig,
               step: float, threads: int) -> np.ndarray:
    """Jacobi ridge update of all latent scores against the frozen state."""
    family = data.family
    lam = params.lam
    p = params.p
    if p == 0:
        return params.u.copy()
    offset = params.beta0[None, :] + data.x @ params.b

    def work(rows):
        # einsum keeps the reduction order fixed per row, so results do not
        # depend on how the rows are chunked across threads
        base = np.einsum("ip,pj->ij", params.u[rows], lam)
        eta = family.clamp_eta(offset[rows] + base)
        mu = family.inverse_link(eta)
        w = np.where(data.mask[rows], family.variance(mu) / params.phi[None, :], 0.0)
        w_safe = np.maximum(w, WEIGHT_FLOOR)
        resid = np.where(data.mask[rows], (data.y[rows] - mu) / params.phi[None, :], 0.0)
        z = base + resid / w_safe
        h = np.einsum("pj,ij,qj->ipq", lam, w, lam)
        h[:, np.arange(p), np.arange(p)] += config.gamma_u
        rhs = np.einsum("ij,pj->ip", w * z, lam)
        try:
            sol = np.linalg.solve(h, rhs[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            raise RidgeSingularError("row system singular (gamma_u = 0)") from None
        return params.u[rows] + step * (sol - params.u[rows])

    chunks = fitting.row_chunks(data.n, threads)
    return np.vstack(fitting.run_chunked(work, chunks, threads))


def _col_sweep(data: ResponseData, params: ModelParams, config: FitConfig,
               u_new: np.ndarray, step: float, threads: int):
    """Jacobi IRWLS update of (beta0, B, Lambda) against the updated scores."""
    family = data.family
    p = params.p
    design = np.hstack([np.ones((data.n, 1)), data.x, u_new])
    q = design.shape[1]
    coefs = np.vstack([params.beta0[None, :], params.b, params.lam])  # (q, m)
    penalty = np.zeros(q)
    penalty[q - p: q] = config.gamma_lambda

    def work(cols):
        # einsum keeps the reduction order fixed per column, so results do
        # not depend on how the columns are chunked across threads
        eta = family.clamp_eta(np.einsum("nq,qj->nj", design, coefs[:, cols]))
        mu = family.inverse_link(eta)
        w = np.where(data.mask[:, cols], family.variance(mu) / params.phi[cols][None, :], 0.0)
        w_safe = np.maximum(w, WEIGHT_FLOOR)
        resid = np.where(data.mask[:, cols],
                         (data.y[:, cols] - mu) / params.phi[cols][None, :], 0.0)
        z = np.einsum("nq,qj->nj", design, coefs[:, cols]) + resid / w_safe
        h = np.einsum("nq,nj,nr->jqr", design, w, design)
        h[:, np.arange(q), np.arange(q)] += penalty
        rhs = np.einsum("nj,nq->jq", w * z, design)
        try:
            sol = np.linalg.solve(h, rhs[:, :, None])[:, :, 0].T  # (q, |cols|)
        except np.linalg.LinAlgError:
            bad = _find_degenerate(h, cols)
            raise ColumnDegenerateError(bad) from None
        return coefs[:, cols] + step * (sol - coefs[:, cols])

    chunks = fitting.row_chunks(data.m, threads)
    out = np.hstack(fitting.run_chunked(work, chunks, threads))
    return out[0], out[1: 1 + data.d], out[1 + data.d:]


def _find_degenerate(h: np.ndarray, cols) -> int:
    for k in range(h.shape[0]):
        if np.linalg.matrix_rank(h[k]) < h.shape[1]:
            return int(np.asarray(cols)[k])
    return int(np.asarray(cols)[0])


def airwls_sweep(data: ResponseData, params: ModelParams, config: FitConfig,
                 step: float):
    """One full AIRWLS iteration: row sweep, column sweep, transform."""
    threads = fitting.pool_size(config)
    u_new = _row_sweep(data, params, config, step, threads)
    beta0, b, lam = _col_sweep(data, params, config, u_new, step, threads)
    out = ModelParams(beta0=beta0, b=b, lam=lam, u=u_new, phi=params.phi.copy())
    out = identifiability_transform(out, whiten=(config.gamma_lambda == 0))
    return out, {}


def fit_airwls(data: ResponseData, config: FitConfig, init: ModelParams | None = None,
               callback=None) -> tuple[ModelParams, FitReport]:
    """Fit by alternating penalized/unpenalized IRWLS (Algorithm sweeps)."""
    return fitting.fit_loop(data, config, init, airwls_sweep,
                            callback=callback, method_name="airwls")
