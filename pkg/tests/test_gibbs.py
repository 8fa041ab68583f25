import math

import numpy as np
import pytest
from scipy.special import logsumexp
from sklearn.base import clone

from wicknls.conserved import mass_values
from wicknls.exceptions import ConfigError
from wicknls.gibbs import GibbsSampler, sample_gibbs
from wicknls.measures import GaussianSpec, a_n_constant, gibbs_log_weights, sample_mu_a_array
from wicknls.spectral import build_lattice


def _importance_mean(lattice, obs, n=400_000, seed=11):
    X = sample_mu_a_array(GaussianSpec(lattice), n, np.random.default_rng(seed))
    lw = gibbs_log_weights(lattice, X, a_n_constant(lattice))
    w = np.exp(lw - logsumexp(lw))
    v = obs(X)
    return float(w @ v)


@pytest.fixture(scope="module")
def d1_ensemble():
    return sample_gibbs(build_lattice(1, 4), 3000, 7)


def test_smc_matches_importance_sampling_d1(d1_ensemble):
    lat = d1_ensemble.lattice
    M = mass_values(d1_ensemble.coeffs)
    ref = _importance_mean(lat, mass_values)
    # SMC members are correlated through resampling; allow for an ESS of half the members
    se = M.std(ddof=1) / math.sqrt(len(M) / 2)
    assert abs(M.mean() - ref) < 4 * se


def test_smc_output_shape_and_meta(d1_ensemble):
    e = d1_ensemble
    assert e.provenance == "gibbs" and np.all(e.log_weights == 0)
    assert e.meta["lambda_schedule"][-1] == 1.0
    assert e.meta["min_stage_ess"] >= 0.5 * len(e) - 1
    assert 0.3 < np.mean(e.meta["acceptance"][-5:]) <= 1.0
    assert e.meta["unique_ancestors"] > 1


def test_smc_is_reproducible():
    lat = build_lattice(2, 1)
    a = sample_gibbs(lat, 200, 3, final_moves=2)
    b = sample_gibbs(lat, 200, 3, final_moves=2)
    assert np.array_equal(a.coeffs, b.coeffs) and np.array_equal(a.seeds, b.seeds)


def test_gibbs_tilts_mass_upwards_d2():
    lat = build_lattice(2, 1)
    e = sample_gibbs(lat, 1000, 1)
    # the +2 aN M term of the Wick weight outweighs the quartic on this lattice
    assert mass_values(e.coeffs).mean() > 1.5 * a_n_constant(lat)


def test_smc_validation():
    with pytest.raises(ConfigError):
        sample_gibbs(build_lattice(1, 4), 0, 1)
    with pytest.raises(ConfigError):
        sample_gibbs(build_lattice(1, 4), 10, 1, ess_fraction=1.5)


def test_gibbs_sampler_estimator():
    est = GibbsSampler(dim=1, n_cut=2, n_members=100, final_moves=2)
    assert clone(est).get_params() == est.get_params()
    e = est.fit().sample()
    assert len(e) == 100
    scores = est.score_samples(e.coeffs)
    assert scores.shape == (100,) and np.all(np.isfinite(scores))
