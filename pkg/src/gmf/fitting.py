"""Shared machinery for both fitters: initialization, dispersion refresh,
the outer loop with its step-halving safeguard, and the thread pool.

Both methods run the same outer loop: one sweep over all parameters,
the identifiability transform, an optional Gaussian dispersion refresh,
and the relative-objective stopping rule |L_{k-1} - L_k| / |L_k| < tol.
A sweep that increases the objective is retried with a halved step (up
to 10 halvings); if every trial increases the objective the incumbent
parameters are kept, which stalls the trace and triggers convergence.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .data import FitConfig, FitReport, ModelParams, ResponseData
from .families import estimate_dispersion
from .pql import identifiability_transform, linear_predictor, pql_objective

SAFEGUARD_TRIALS = 10
ETA_SEPARATION = 29.99


def initialize_params(data: ResponseData, config: FitConfig) -> ModelParams:
    """Random small-scale start with intercepts warm-started at the
    column means (smoothed so they stay inside the mean domain)."""
    rng = np.random.default_rng(config.seed)
    counts = data.mask.sum(axis=0).astype(float)
    sums = np.where(data.mask, data.y, 0.0).sum(axis=0)
    if data.family.name == "gaussian":
        mu0 = sums / np.maximum(counts, 1.0)
    else:
        mu0 = (sums + 0.5) / (counts + 1.0)
        mu0 = data.family.clamp_mean(mu0)
    beta0 = np.asarray(data.family.link(mu0), dtype=float)
    p = config.rank
    return ModelParams(
        beta0=beta0,
        b=np.zeros((data.d, data.m)),
        lam=rng.normal(0.0, 0.1, size=(p, data.m)),
        u=rng.normal(0.0, 0.1, size=(data.n, p)),
        phi=np.ones(data.m),
    )


def refresh_dispersion(data: ResponseData, params: ModelParams) -> ModelParams:
    if data.family.dispersion_fixed:
        return params
    eta = linear_predictor(data, params)
    mu = data.family.inverse_link(eta)
    out = params.copy()
    out.phi = np.array([
        estimate_dispersion(data.family, data.y[:, j], mu[:, j], data.mask[:, j])
        for j in range(data.m)
    ])
    return out


def masked_deviance(data: ResponseData, params: ModelParams) -> float:
    eta = linear_predictor(data, params)
    mu = data.family.inverse_link(eta)
    d = data.family.unit_deviance(data.y, mu) / params.phi[None, :]
    return float(np.sum(np.where(data.mask, d, 0.0)))


def scree_from_loadings(lam: np.ndarray) -> np.ndarray:
    return np.sort(np.sqrt(np.sum(lam**2, axis=1)))[::-1]


def row_chunks(n: int, threads: int):
    """Contiguous index chunks; chunking never changes per-row results."""
    k = max(1, min(threads, n))
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [np.arange(bounds[i], bounds[i + 1]) for i in range(k) if bounds[i] < bounds[i + 1]]


def run_chunked(fn, chunks, threads: int):
    """Apply fn to each chunk, in a pool when threads > 1; order preserved."""
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, chunks))
    return [fn(c) for c in chunks]


def pool_size(config: FitConfig) -> int:
    import os
    if not config.parallel and config.threads <= 1:
        return 1
    t = config.threads
    if t == 0:
        t = os.cpu_count() or 1
    return max(1, t)


def fit_loop(data: ResponseData, config: FitConfig, init, sweep_fn,
             callback=None, method_name: str = "") -> tuple[ModelParams, FitReport]:
    """Outer loop shared by AIRWLS and Newton.

    sweep_fn(data, params, config, step) must return (params', diag dict)
    with the identifiability transform already applied.
    """
    t0 = time.perf_counter()
    data.validate()
    config.validate()
    params = init.copy() if init is not None else initialize_params(data, config)
    gamma_u, gamma_lam = config.gamma_u, config.gamma_lambda
    # baseline must live in the same (identified) coordinates as every
    # sweep output, otherwise the whitening-induced penalty change makes
    # the first candidate incomparable
    params = identifiability_transform(params, whiten=(gamma_lam == 0))

    obj = pql_objective(data, params, gamma_u, gamma_lam)
    trace = [obj]
    converged = False
    diagnostics: dict = {"family": data.family.name, "stalled": False,
                         "separation_columns": [], "diag_floor_hits": 0}

    it = 0
    for it in range(1, config.max_iter + 1):
        step = 1.0
        accepted = None
        best_obj, best_params = np.inf, None
        for _ in range(SAFEGUARD_TRIALS + 1):
            cand, diag = sweep_fn(data, params, config, step)
            cand_obj = pql_objective(data, cand, gamma_u, gamma_lam)
            if cand_obj <= obj + 1e-10 * (1.0 + abs(obj)):
                accepted = (cand, cand_obj, diag)
                break
            if cand_obj < best_obj:
                best_obj, best_params = cand_obj, (cand, diag)
            step *= 0.5
        if accepted is None:
            if best_obj < obj:
                accepted = (best_params[0], best_obj, best_params[1])
            else:
                accepted = (params, obj, {})
                diagnostics["stalled"] = True
        params, obj, diag = accepted
        diagnostics["diag_floor_hits"] += int(diag.get("diag_floor_hits", 0))

        if config.update_dispersion and not data.family.dispersion_fixed:
            params = refresh_dispersion(data, params)
            obj = pql_objective(data, params, gamma_u, gamma_lam)

        trace.append(obj)
        if callback is not None:
            callback(it, params)

        prev = trace[-2]
        rel = abs(prev - obj) / max(abs(obj), 1e-12)
        if rel < config.tol or diag.get("stationary", False):
            converged = True
            break

    eta = linear_predictor(data, params)
    sep = np.where((np.abs(eta) >= ETA_SEPARATION).any(axis=0))[0]
    diagnostics["separation_columns"] = sep.tolist()

    report = FitReport(
        method=method_name,
        objective_trace=trace,
        deviance=masked_deviance(data, params),
        iterations=it,
        seconds=time.perf_counter() - t0,
        scree=scree_from_loadings(params.lam).tolist(),
        converged=converged,
        diagnostics=diagnostics,
    )
    return params, report
