import numpy as np
import pytest
from scipy import stats

from gmf import get_family, simulate_dataset
from gmf.errors import InputError


def test_shapes_and_mask():
    data, truth = simulate_dataset(30, 12, 3, 2, get_family("poisson"), seed=1)
    assert data.y.shape == (30, 12)
    assert data.x.shape == (30, 2)
    assert data.mask.all()
    assert truth.lam.shape == (3, 12)
    assert truth.u.shape == (30, 3)
    assert np.all(truth.phi == 1.0)
    data.validate()


def test_truth_is_identified():
    _, truth = simulate_dataset(50, 10, 3, 0, get_family("gaussian"), seed=2)
    assert np.max(np.abs(truth.u.mean(axis=0))) < 1e-8
    cov = truth.u.T @ truth.u / 50
    assert np.max(np.abs(cov - np.eye(3))) < 1e-8
    lt = truth.lam.T[:3, :3]
    assert np.max(np.abs(np.triu(lt, k=1))) < 1e-10
    assert np.all(np.diag(lt) > 0)


def test_family_support():
    for tok, check in [("poisson", lambda y: np.all((y >= 0) & (y == np.round(y)))),
                       ("bernoulli", lambda y: set(np.unique(y)) <= {0.0, 1.0})]:
        data, _ = simulate_dataset(20, 8, 2, 1, get_family(tok), seed=3)
        assert check(data.y)


def test_deterministic_given_seed():
    a, ta = simulate_dataset(15, 6, 2, 1, get_family("poisson"), seed=9)
    b, tb = simulate_dataset(15, 6, 2, 1, get_family("poisson"), seed=9)
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(ta.lam, tb.lam)
    c, _ = simulate_dataset(15, 6, 2, 1, get_family("poisson"), seed=10)
    assert not np.array_equal(a.y, c.y)


def test_covariance_arguments():
    sx = np.array([[2.0, 0.5], [0.5, 1.0]])
    data, _ = simulate_dataset(4000, 4, 1, 2, get_family("gaussian"),
                               sigma_x=sx, seed=4)
    emp = np.cov(data.x.T)
    assert np.max(np.abs(emp - sx)) < 0.15

    sl = np.array([[4.0, 0.0], [0.0, 0.25]])
    _, truth = simulate_dataset(300, 3000, 2, 0, get_family("gaussian"),
                                sigma_lambda=sl, seed=0)
    # the transform mixes rows orthogonally, so check total scale instead
    total = np.sum(truth.lam**2) / 3000
    assert total == pytest.approx(np.trace(sl), rel=0.1)


def test_covariance_validation():
    fam = get_family("gaussian")
    with pytest.raises(InputError):
        simulate_dataset(10, 4, 1, 2, fam, sigma_x=np.ones((3, 3)))
    with pytest.raises(InputError):
        simulate_dataset(10, 4, 1, 2, fam, sigma_x=np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InputError):
        simulate_dataset(10, 4, 1, 2, fam, sigma_x=-np.eye(2))
    with pytest.raises(InputError):
        simulate_dataset(10, 4, 2, 1, fam, sigma_lambda=np.eye(3))
    with pytest.raises(InputError):
        simulate_dataset(2, 4, 2, 0, fam)


def test_gaussian_marginals():
    # with p=0, d=0 and beta0=0 the responses are i.i.d. standard normal
    data, _ = simulate_dataset(2000, 2, 0, 0, get_family("gaussian"), seed=6)
    _, pval = stats.kstest(data.y.ravel(), "norm")
    assert pval > 1e-4


def test_poisson_mean_matches_intercept():
    data, _ = simulate_dataset(4000, 3, 0, 0, get_family("poisson"), seed=7,
                               beta0=1.0)
    assert data.y.mean() == pytest.approx(np.e, rel=0.05)
