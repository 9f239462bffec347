"""Penalized quasi-likelihood objective, gradients, Hessians, and the
identifiability transform.

The objective minimized everywhere in this package is

    L = - sum_obs (y*eta - b(eta)) / phi_j
        + (gamma_u / 2) ||U||_F^2 + (gamma_lambda / 2) ||Lambda||_F^2

With (gamma_u, gamma_lambda) = (1, 0) the penalty is the Gaussian prior
on the latent scores; with equal penalties it is the nuclear-norm-style
regularized objective.  Masked cells contribute zero weight and zero
score throughout.
"""

from __future__ import annotations

import numpy as np

from .data import ModelParams, ResponseData
from .errors import DegenerateLatentError, NumericalOverflowError, ShapeMismatchError


def linear_predictor(data: ResponseData, params: ModelParams) -> np.ndarray:
    """eta[i, j] = beta0[j] + x_i . b_j + u_i . lam_j, clamped per family."""
    if params.b.shape[0] != data.d:
        raise ShapeMismatchError("coefficient rows differ from covariate columns")
    if params.u.shape[0] != data.n:
        raise ShapeMismatchError("latent score rows differ from response rows")
    if params.beta0.shape[0] != data.m:
        raise ShapeMismatchError("intercept length differs from response columns")
    eta = params.beta0[None, :] + data.x @ params.b + params.u @ params.lam
    return data.family.clamp_eta(eta)


def working_state(data: ResponseData, params: ModelParams):
    """Return (eta, mu, w) where w = mask * v(mu) / phi_j."""
    eta = linear_predictor(data, params)
    mu = data.family.inverse_link(eta)
    w = data.family.variance(mu) / params.phi[None, :]
    w = np.where(data.mask, w, 0.0)
    return eta, mu, w


def pql_objective(data: ResponseData, params: ModelParams,
                  gamma_u: float, gamma_lambda: float) -> float:
    eta = linear_predictor(data, params)
    cells = (data.y * eta - data.family.cumulant(eta)) / params.phi[None, :]
    value = -float(np.sum(np.where(data.mask, cells, 0.0)))
    value += 0.5 * gamma_u * float(np.sum(params.u**2))
    value += 0.5 * gamma_lambda * float(np.sum(params.lam**2))
    if not np.isfinite(value):
        raise NumericalOverflowError("PQL objective is non-finite")
    return value


def _scaled_residual(data: ResponseData, params: ModelParams, mu: np.ndarray):
    """mask * (y - mu) / phi_j, the per-cell score factor."""
    r = (data.y - mu) / params.phi[None, :]
    return np.where(data.mask, r, 0.0)


def grad_u(data: ResponseData, params: ModelParams, gamma_u: float) -> np.ndarray:
    """Gradient of the objective w.r.t. the latent scores, (n, p)."""
    _, mu, _ = working_state(data, params)
    r = _scaled_residual(data, params, mu)
    return -r @ params.lam.T + gamma_u * params.u


def grad_coef(data: ResponseData, params: ModelParams, gamma_lambda: float):
    """Gradients w.r.t. (beta0, B, Lambda): shapes (m,), (d, m), (p, m)."""
    _, mu, _ = working_state(data, params)
    r = _scaled_residual(data, params, mu)
    g_beta0 = -r.sum(axis=0)
    g_b = -data.x.T @ r
    g_lam = -params.u.T @ r + gamma_lambda * params.lam
    return g_beta0, g_b, g_lam


def hess_u_full(lam: np.ndarray, w_row: np.ndarray, gamma_u: float) -> np.ndarray:
    """Lambda W Lambda^T + gamma_u I for one row; w_row = mask * v(mu)/phi."""
    p = lam.shape[0]
    return (lam * w_row[None, :]) @ lam.T + gamma_u * np.eye(p)


def hess_diag_u(lam: np.ndarray, w_row: np.ndarray, gamma_u: float) -> np.ndarray:
    """Diagonal of hess_u_full via the Hadamard form (Lambda o Lambda) w."""
    return (lam**2) @ w_row + gamma_u


def hess_diag_coef(design: np.ndarray, w_col: np.ndarray,
                   penalty_diag: np.ndarray) -> np.ndarray:
    """Diagonal Fisher block for one response column.

    design : (n, q) columns of the per-column GLM design
    w_col : (n,) mask * v(mu)/phi for that column
    penalty_diag : (q,) added ridge terms (zero for unpenalized entries)
    """
    return (design**2).T @ w_col + penalty_diag


def laplace_logdet(lam: np.ndarray, w_row: np.ndarray) -> float:
    """Half log-determinant of Lambda W Lambda^T + I (the dropped term)."""
    h = (lam * w_row[None, :]) @ lam.T + np.eye(lam.shape[0])
    sign, logdet = np.linalg.slogdet(h)
    return 0.5 * float(logdet)


def _sample_cov(u: np.ndarray) -> np.ndarray:
    """Sample covariance with denominator n (rows assumed centered)."""
    return (u.T @ u) / u.shape[0]


def identifiability_transform(params: ModelParams, whiten: bool = True) -> ModelParams:
    """Rotate (U, Lambda) to the identified coordinate system.

    1. Center U and fold the removed mean into the intercepts.
    2. Whiten so the sample covariance of U is the identity (skipped when
       whiten=False, which preserves both penalty norms exactly).
    3. Apply the orthogonal rotation making the leading p x p block of
       Lambda^T lower triangular with positive diagonal.

    The linear predictor is preserved exactly.
    """
    p = params.p
    out = params.copy()
    if p == 0:
        return out
    n = out.u.shape[0]

    u_bar = out.u.mean(axis=0)
    out.beta0 = out.beta0 + out.lam.T @ u_bar
    u = out.u - u_bar[None, :]
    lam = out.lam

    if whiten:
        cov = _sample_cov(u)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        evals = evals[order]
        evecs = evecs[:, order]
        if evals[-1] <= 1e-12 * max(evals[0], 1.0) or n <= p:
            raise DegenerateLatentError("latent scores are rank deficient")
        # deterministic eigenvector signs: first nonzero loading positive
        for k in range(p):
            col = evecs[:, k]
            nz = np.flatnonzero(np.abs(col) > 1e-12)
            if nz.size and col[nz[0]] < 0:
                evecs[:, k] = -col
        theta = evecs / np.sqrt(evals)[None, :]
        theta_inv = np.sqrt(evals)[:, None] * evecs.T
        u = u @ theta
        lam = theta_inv @ lam

    # QR of the leading p x p block of Lambda gives the rotation that makes
    # the new leading block upper triangular (Lambda^T lower triangular).
    block = lam[:, : min(p, lam.shape[1])]
    if block.shape[1] < p:
        block = np.hstack([block, np.zeros((p, p - block.shape[1]))])
    q, r = np.linalg.qr(block)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs[None, :]
    out.u = u @ q
    out.lam = q.T @ lam
    return out
