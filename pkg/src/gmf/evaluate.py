"""Model evaluation: deviance, null-deviance fraction, Procrustes error,
coefficient MSE, AUC, scree values, cell-wise cross-validation, and
bootstrap resampling drivers."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .data import FitConfig, ModelParams, ResponseData
from .errors import (
    BootstrapUnstableError,
    ShapeMismatchError,
    SplitInfeasibleError,
    UndefinedAucError,
    UndefinedFractionError,
)
from .fitting import scree_from_loadings
from .pql import linear_predictor


def _fit_dispatch(config: FitConfig):
    from .airwls import fit_airwls
    from .newton import fit_newton
    return fit_airwls if config.method == "airwls" else fit_newton


def deviance(data: ResponseData, mu_hat, phi_hat, mask=None) -> float:
    """Total deviance over the masked cells: sum of unit deviances scaled
    by the per-column dispersions (saturated dispersions taken equal to
    the fitted ones)."""
    mask = data.mask if mask is None else np.asarray(mask, dtype=bool)
    mu_hat = np.asarray(mu_hat, dtype=float)
    phi_hat = np.asarray(phi_hat, dtype=float)
    data.family.variance(mu_hat[mask])  # domain check
    d = data.family.unit_deviance(data.y, mu_hat) / phi_hat[None, :]
    return float(np.sum(np.where(mask, d, 0.0)))


def null_means(data: ResponseData, mask=None) -> np.ndarray:
    """Intercept-only fit per column: observed column mean, projected into
    the family's mean domain."""
    mask = data.mask if mask is None else np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=0).astype(float)
    sums = np.where(mask, data.y, 0.0).sum(axis=0)
    mu = sums / np.maximum(counts, 1.0)
    mu = data.family.clamp_mean(mu)
    return np.broadcast_to(mu[None, :], data.y.shape).copy()


def null_deviance_fraction(data: ResponseData, mu_hat, phi_hat, mask=None) -> float:
    """1 - D(fit) / D(null); <= 1, negative for worse-than-null fits."""
    mask = data.mask if mask is None else np.asarray(mask, dtype=bool)
    d_fit = deviance(data, mu_hat, phi_hat, mask)
    d_null = deviance(data, null_means(data, mask), phi_hat, mask)
    if d_null == 0.0:
        raise UndefinedFractionError("null deviance is zero")
    return 1.0 - d_fit / d_null


def procrustes_error(lambda_true: np.ndarray, lambda_hat: np.ndarray) -> float:
    """min over orthogonal Omega of ||Lambda0 - Omega Lambda_hat||_F,
    solved in closed form from the SVD of Lambda0 Lambda_hat^T
    (reflections allowed)."""
    lambda_true = np.asarray(lambda_true, dtype=float)
    lambda_hat = np.asarray(lambda_hat, dtype=float)
    if lambda_true.shape != lambda_hat.shape:
        raise ShapeMismatchError("loading matrices must have equal shapes")
    a, _, bt = np.linalg.svd(lambda_true @ lambda_hat.T)
    omega = a @ bt
    return float(np.linalg.norm(lambda_true - omega @ lambda_hat))


def coef_mse(b_true: np.ndarray, b_hat: np.ndarray) -> float:
    """||B0 - B_hat||_F^2 / (m d)."""
    b_true = np.asarray(b_true, dtype=float)
    b_hat = np.asarray(b_hat, dtype=float)
    if b_true.shape != b_hat.shape:
        raise ShapeMismatchError("coefficient matrices must have equal shapes")
    return float(np.sum((b_true - b_hat) ** 2) / b_true.size)


def auc(labels, scores) -> float:
    """Mann-Whitney AUC with half credit for score ties."""
    labels = np.asarray(labels, dtype=float)
    scores = np.asarray(scores, dtype=float)
    pos = labels > 0.5
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def scree_values(lam: np.ndarray) -> np.ndarray:
    """Square roots of diag(Lambda Lambda^T), sorted descending."""
    return scree_from_loadings(np.asarray(lam, dtype=float))


# ------------------------------------------------------------------ #
# Cross-validation
# ------------------------------------------------------------------ #

@dataclass
class CVRow:
    config: FitConfig
    mean_deviance: float
    sd_deviance: float
    fold_deviances: list = field(default_factory=list)


@dataclass
class CVTable:
    rows: list
    best_index: int

    @property
    def best_config(self) -> FitConfig:
        return self.rows[self.best_index].config


def make_folds(data: ResponseData, folds: int, seed: int, max_retries: int = 20):
    """Assign observed cells to k folds such that every row and column
    keeps at least one training cell in each fold."""
    if folds < 2:
        raise SplitInfeasibleError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    obs = np.argwhere(data.mask)
    for _ in range(max_retries):
        perm = rng.permutation(len(obs))
        assignment = np.empty(len(obs), dtype=int)
        assignment[perm] = np.arange(len(obs)) % folds
        ok = True
        masks = []
        for k in range(folds):
            test_mask = np.zeros_like(data.mask)
            cells = obs[assignment == k]
            test_mask[cells[:, 0], cells[:, 1]] = True
            train = data.mask & ~test_mask
            if not (train.any(axis=1).all() and train.any(axis=0).all()):
                ok = False
                break
            masks.append(test_mask)
        if ok:
            return masks
    raise SplitInfeasibleError("could not build feasible cell-wise folds")


def holdout_deviance(data: ResponseData, params: ModelParams, test_mask) -> float:
    """Mean deviance per held-out cell."""
    eta = linear_predictor(data, params)
    mu = data.family.inverse_link(eta)
    mu = data.family.clamp_mean(mu)
    d = deviance(data, mu, params.phi, test_mask)
    return d / max(int(np.asarray(test_mask).sum()), 1)


def cross_validate(data: ResponseData, configs, folds: int, seed: int,
                   threads: int = 1) -> CVTable:
    """k-fold cell-wise CV over a configuration grid.

    Deterministic given (grid, folds, seed) regardless of thread count:
    jobs are merged by index."""
    fold_masks = make_folds(data, folds, seed)
    jobs = [(ci, k) for ci in range(len(configs)) for k in range(folds)]

    def run(job):
        ci, k = job
        config = configs[ci]
        train = data.with_mask(data.mask & ~fold_masks[k])
        params, _ = _fit_dispatch(config)(train, config)
        return holdout_deviance(data, params, fold_masks[k])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    rows = []
    for ci, config in enumerate(configs):
        vals = [results[i] for i, (c, _) in enumerate(jobs) if c == ci]
        rows.append(CVRow(config, float(np.mean(vals)),
                          float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
                          vals))
    best = int(np.argmin([r.mean_deviance for r in rows]))
    return CVTable(rows, best)


# ------------------------------------------------------------------ #
# Bootstrap
# ------------------------------------------------------------------ #

@dataclass
class BootstrapResult:
    scheme: str
    replicates: list  # ModelParams (parametric / row-resample) or floats (cell-holdout)
    failures: int


def bootstrap_refit(data: ResponseData, config: FitConfig, scheme: str,
                    replicates: int, seed: int,
                    base_params: ModelParams | None = None,
                    holdout_fraction: float = 0.1) -> BootstrapResult:
    """Resampling drivers: parametric, row-resample, or cell-holdout.

    Replicate fit failures are recorded; the run aborts only when at
    least half of the replicates fail."""
    from .data import holdout_split

    fit = _fit_dispatch(config)
    if scheme == "parametric" and base_params is None:
        base_params, _ = fit(data, config)
    mu_base = None
    if scheme == "parametric":
        mu_base = data.family.inverse_link(linear_predictor(data, base_params))

    out = []
    failures = 0
    for r in range(replicates):
        rng = np.random.default_rng(seed + 1000 * r)
        try:
            if scheme == "parametric":
                y_star = data.family.sample(mu_base, rng)
                rep_data = ResponseData(y_star, data.mask, data.x, data.family)
                params, _ = fit(rep_data, config.replace(seed=config.seed + r))
                out.append(params)
            elif scheme == "row-resample":
                idx = rng.integers(0, data.n, size=data.n)
                rep_data = ResponseData(data.y[idx], data.mask[idx],
                                        data.x[idx] if data.d else None, data.family)
                params, _ = fit(rep_data, config.replace(seed=config.seed + r))
                out.append(params)
            elif scheme == "cell-holdout":
                train, test = holdout_split(data, holdout_fraction, seed + 1000 * r)
                params, _ = fit(data.with_mask(train),
                                config.replace(seed=config.seed + r))
                out.append(holdout_deviance(data, params, test))
            else:
                raise ValueError(f"unknown bootstrap scheme {scheme!r}")
        except ValueError:
            raise
        except Exception:
            failures += 1
    if replicates and failures * 2 >= replicates:
        raise BootstrapUnstableError(
            f"{failures} of {replicates} bootstrap replicates failed"
        )
    return BootstrapResult(scheme, out, failures)
