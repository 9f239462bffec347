import numpy as np
import pytest

from gmf import FitConfig, ModelParams, ResponseData, get_family


def random_instance(family_token, n, m, p, d, seed, mask_frac=0.0, scale=0.5):
    """Small random (data, params) pair with valid responses for the family."""
    rng = np.random.default_rng(seed)
    family = get_family(family_token)
    x = rng.normal(size=(n, d)) if d else np.zeros((n, 0))
    params = ModelParams(
        beta0=rng.normal(0, scale, size=m),
        b=rng.normal(0, scale, size=(d, m)),
        lam=rng.normal(0, scale, size=(p, m)),
        u=rng.normal(0, scale, size=(n, p)),
        phi=(rng.uniform(0.5, 2.0, size=m) if family_token == "gaussian"
             else np.ones(m)),
    )
    eta = params.beta0[None, :] + x @ params.b + params.u @ params.lam
    mu = family.inverse_link(family.clamp_eta(eta))
    y = family.sample(mu, rng)
    mask = np.ones((n, m), dtype=bool)
    if mask_frac > 0:
        # drop cells but keep every row/column observed
        for _ in range(100):
            cand = rng.random((n, m)) >= mask_frac
            if cand.any(axis=1).all() and cand.any(axis=0).all():
                mask = cand
                break
    data = ResponseData(y, mask, x if d else None, family)
    return data, params


@pytest.fixture
def poisson_instance():
    return random_instance("poisson", 8, 6, 2, 2, seed=11)
