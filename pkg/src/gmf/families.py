"""Exponential-family kernels with canonical links.

Each family bundles the inverse link, variance function, cumulant
function, unit deviance, and a sampler.  Only canonical links are
supported, so the identity b''(eta) = v(mu) holds exactly and the Fisher
information equals the negative Hessian everywhere downstream.

Linear predictors are clamped by the *caller* to [-ETA_CLAMP, ETA_CLAMP]
for Poisson and Bernoulli before inverse-link evaluation; the helpers
here assume finite, pre-clamped eta.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    InsufficientDataError,
    InvalidMeanError,
    InvalidResponseError,
    UnsupportedFamilyError,
)

# exp(30) ~ 1e13: keeps exp() and the Poisson variance well inside double range.
ETA_CLAMP = 30.0

# Floor for Gaussian dispersion estimates (zero residuals would otherwise
# produce zero weights downstream).
PHI_FLOOR = 1e-8


class Family:
    """Base class; concrete families override the scalar kernels below.

    All methods are elementwise and accept scalars or ndarrays.
    """

    name: str = ""
    dispersion_fixed: bool = True
    clamp_eta_values: bool = True

    def clamp_eta(self, eta):
        if self.clamp_eta_values:
            return np.clip(eta, -ETA_CLAMP, ETA_CLAMP)
        return np.asarray(eta, dtype=float)

    def inverse_link(self, eta):
        raise NotImplementedError

    def link(self, mu):
        raise NotImplementedError

    def variance(self, mu):
        raise NotImplementedError

    def cumulant(self, eta):
        raise NotImplementedError

    def unit_deviance(self, y, mu):
        raise NotImplementedError

    def check_response(self, y, mask=None):
        """Raise InvalidResponseError if observed entries are invalid."""

    def clamp_mean(self, mu, eps=1e-10):
        """Project means into the (open) mean domain."""
        return np.asarray(mu, dtype=float)

    def sample(self, mu, rng, phi=None):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class Gaussian(Family):
    name = "gaussian"
    dispersion_fixed = False
    clamp_eta_values = False

    def inverse_link(self, eta):
        return np.asarray(eta, dtype=float)

    def link(self, mu):
        return np.asarray(mu, dtype=float)

    def variance(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def cumulant(self, eta):
        eta = np.asarray(eta, dtype=float)
        return 0.5 * eta**2

    def unit_deviance(self, y, mu):
        return (np.asarray(y, dtype=float) - mu) ** 2

    def sample(self, mu, rng, phi=None):
        sd = 1.0 if phi is None else np.sqrt(phi)
        return rng.normal(mu, sd)


class Poisson(Family):
    name = "poisson"

    def inverse_link(self, eta):
        return np.exp(eta)

    def link(self, mu):
        return np.log(mu)

    def variance(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0):
            raise InvalidMeanError("Poisson mean must be positive")
        return mu

    def cumulant(self, eta):
        return np.exp(eta)

    def unit_deviance(self, y, mu):
        y = np.asarray(y, dtype=float)
        mu = np.asarray(mu, dtype=float)
        # 0*log(0) = 0 by convention
        ratio = np.log(np.where(y > 0, y, 1.0) / mu)
        return 2.0 * (y * ratio - (y - mu))

    def check_response(self, y, mask=None):
        y = np.asarray(y, dtype=float)
        obs = y if mask is None else y[np.asarray(mask, dtype=bool)]
        if np.any(obs < 0) or not np.all(np.isfinite(obs)):
            raise InvalidResponseError("Poisson responses must be finite and >= 0")

    def clamp_mean(self, mu, eps=1e-10):
        return np.maximum(np.asarray(mu, dtype=float), eps)

    def sample(self, mu, rng, phi=None):
        return rng.poisson(mu).astype(float)


class Bernoulli(Family):
    name = "bernoulli"

    def inverse_link(self, eta):
        eta = np.asarray(eta, dtype=float)
        return 0.5 * (1.0 + np.tanh(0.5 * eta))

    def link(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.log(mu) - np.log1p(-mu)

    def variance(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0) or np.any(mu >= 1):
            raise InvalidMeanError("Bernoulli mean must lie in (0, 1)")
        return mu * (1.0 - mu)

    def cumulant(self, eta):
        eta = np.asarray(eta, dtype=float)
        # log(1+exp(eta)) without overflow
        return np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta)))

    def unit_deviance(self, y, mu):
        y = np.asarray(y, dtype=float)
        mu = np.asarray(mu, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(y > 0.5, -np.log(mu), -np.log1p(-mu))
        return 2.0 * term

    def check_response(self, y, mask=None):
        y = np.asarray(y, dtype=float)
        obs = y if mask is None else y[np.asarray(mask, dtype=bool)]
        if not np.all((obs == 0) | (obs == 1)):
            raise InvalidResponseError("Bernoulli responses must be 0 or 1")

    def clamp_mean(self, mu, eps=1e-10):
        return np.clip(np.asarray(mu, dtype=float), eps, 1.0 - eps)

    def sample(self, mu, rng, phi=None):
        return (rng.random(np.shape(mu)) < mu).astype(float)


_FAMILIES = {
    "gaussian": Gaussian,
    "poisson": Poisson,
    "bernoulli": Bernoulli,
}


def get_family(token: str) -> Family:
    """Resolve a CLI token (gaussian / poisson / bernoulli) to a family."""
    try:
        return _FAMILIES[token.lower()]()
    except KeyError:
        raise UnsupportedFamilyError(
            f"unknown family {token!r}; expected one of {sorted(_FAMILIES)}"
        ) from None


def estimate_dispersion(family: Family, y_col, mu_col, mask_col) -> float:
    """Per-column dispersion estimate.

    Poisson and Bernoulli dispersions are fixed at 1.  Gaussian uses the
    Pearson moment estimator over observed cells with the observed count
    in the denominator (no degrees-of-freedom correction), floored at
    PHI_FLOOR.
    """
    if family.dispersion_fixed:
        return 1.0
    mask = np.asarray(mask_col, dtype=bool)
    n_obs = int(mask.sum())
    if n_obs < 2:
        raise InsufficientDataError("dispersion estimate needs >= 2 observed cells")
    y = np.asarray(y_col, dtype=float)[mask]
    mu = np.asarray(mu_col, dtype=float)[mask]
    pearson = np.sum((y - mu) ** 2 / family.variance(mu)) / n_obs
    return max(float(pearson), PHI_FLOOR)
