import math
import warnings

import numpy as np
import pytest
from scipy.special import logsumexp
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_coeffs
from wicknls.exceptions import ConfigError, DegenerateEnsembleError
from wicknls.measures import (
    Ensemble,
    GaussianSpec,
    LowESSWarning,
    QuadratureWarning,
    a_n_constant,
    effective_sample_size,
    gibbs_log_weight,
    gibbs_log_weights,
    importance_resample,
    member_seed,
    moment_oracle,
    quartic_integral,
    sample_ensemble,
    sample_mu_a,
    sample_mu_a_array,
)
from wicknls.spectral import SpectralField, build_lattice, min_grid_size


def _mean_z(x, ref):
    return (x.mean() - ref) / (x.std(ddof=1) / math.sqrt(x.size))


def test_mu2_covariance_examples():
    lat = build_lattice(2, 25)
    X = sample_mu_a_array(GaussianSpec(lat), 100_000, np.random.default_rng(0))
    i1, i34 = lat.position((1, 0)), lat.position((3, 4))
    assert abs(_mean_z(np.abs(X[:, i1]) ** 2, 2.0)) < 4
    assert abs(_mean_z(np.abs(X[:, i34]) ** 2, 0.08)) < 4
    assert abs(_mean_z(X[:, i1].real, 0.0)) < 4
    assert abs(_mean_z(X[:, i1].imag, 0.0)) < 4


def test_modes_uncorrelated():
    lat = build_lattice(2, 2)
    X = sample_mu_a_array(GaussianSpec(lat), 50_000, np.random.default_rng(1))
    cross = X[:, 0] * np.conj(X[:, 1])
    assert abs(_mean_z(cross.real, 0.0)) < 4


@pytest.mark.parametrize("k,p,expected", [((1, 0), 1, 2.0), ((1, 0), 2, 8.0), ((1, 1), 3, 6.0), (1, 1, 2.0)])
def test_moment_oracle_examples(k, p, expected):
    assert moment_oracle(k, p, 2.0) == pytest.approx(expected)


@pytest.mark.parametrize("p", [0, -1, 1.5])
def test_moment_oracle_rejects_bad_p(p):
    with pytest.raises(ConfigError):
        moment_oracle((1, 0), p)


def test_a_n_examples():
    lat = build_lattice(2, 4)
    assert a_n_constant(lat, 2) == pytest.approx(12.0)
    assert a_n_constant(lat, 1) == pytest.approx(8.0)
    assert a_n_constant(lat, 1, strict=True) == 0.0


def test_quartic_examples(rng):
    lat = build_lattice(2, 4)
    assert quartic_integral(SpectralField.zeros(lat)) == 0.0
    c = 1.3 - 0.4j
    f = SpectralField.single_mode(lat, (2, 0), c)
    assert quartic_integral(f) == pytest.approx(abs(c) ** 4, rel=1e-12)


def test_quartic_two_modes_vs_quadruple_sum(rng):
    lat = build_lattice(2, 4)
    c = np.zeros(lat.n_modes, complex)
    idx = [lat.position((1, 0)), lat.position((0, 2))]
    c[idx] = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    ref = 0.0
    for p in range(lat.n_modes):
        for q in range(lat.n_modes):
            for r in range(lat.n_modes):
                s = lat.modes[p] + lat.modes[q] - lat.modes[r]
                j = lat.index.get(tuple(int(x) for x in s))
                if j is not None:
                    ref += (c[p] * c[q] * np.conj(c[r]) * np.conj(c[j])).real
    assert abs(quartic_integral(SpectralField(lat, c)) - ref) < 1e-10


def test_coarse_grid_warns():
    lat = build_lattice(1, 4)
    with pytest.warns(QuadratureWarning):
        quartic_integral(SpectralField.zeros(lat), min_grid_size(lat, 3) - 1)


def test_gibbs_weight_examples(rng):
    lat = build_lattice(2, 2)
    assert gibbs_log_weight(SpectralField.zeros(lat), 12.0) == pytest.approx(-144.0)
    X = random_coeffs(lat, rng, 100, scale=5.0)
    assert np.all(np.isfinite(gibbs_log_weights(lat, X, 12.0)))


@given(st.floats(0.0, 30.0), st.integers(0, 2**32 - 1))
def test_gibbs_log_weight_bounded_above(aN, seed):
    # -1/2 int |u|^4 + 2 aN M - aN^2 <= -1/2 M^2 + 2 aN M - aN^2 <= aN^2
    lat = build_lattice(2, 4)
    f = SpectralField(lat, random_coeffs(lat, np.random.default_rng(seed)))
    assert gibbs_log_weight(f, aN) <= aN**2 + 1e-9


@pytest.mark.parametrize("n_cut", [4, 16, 64])
def test_gibbs_weights_finite_up_to_ncut_64(n_cut):
    lat = build_lattice(2, n_cut)
    aN = a_n_constant(lat)
    X = sample_mu_a_array(GaussianSpec(lat), 2000, np.random.default_rng(n_cut))
    lw = gibbs_log_weights(lat, X, aN)
    assert np.all(np.isfinite(lw))
    # W >= -2 aN^2 bounds every log-weight by aN^2
    assert np.all(lw <= aN**2)
    assert np.isfinite(logsumexp(lw))


def test_ess_examples():
    assert effective_sample_size(np.zeros(50)) == pytest.approx(50.0)
    lw = np.full(50, -1000.0)
    lw[3] = 0.0
    assert effective_sample_size(lw) == pytest.approx(1.0)
    with pytest.raises(DegenerateEnsembleError):
        effective_sample_size([-np.inf, -np.inf])


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=40), st.floats(-100, 100))
def test_ess_bounds_and_shift_invariance(lw, shift):
    lw = np.array(lw)
    ess = effective_sample_size(lw)
    assert 1.0 - 1e-9 <= ess <= lw.size + 1e-9
    assert effective_sample_size(lw + shift) == pytest.approx(ess, rel=1e-9)


def _toy_ensemble(n=20_000, seed=0):
    lat = build_lattice(1, 4)
    e = sample_ensemble(GaussianSpec(lat), n, seed)
    lw = gibbs_log_weights(lat, e.coeffs, a_n_constant(lat))
    return Ensemble(lat, e.coeffs, lw, e.seeds, "gibbs")


def test_dominant_weight_resample_is_constant():
    e = _toy_ensemble(200)
    lw = np.full(len(e), -500.0)
    lw[7] = 0.0
    with pytest.warns(LowESSWarning):
        out = importance_resample(e.subset(np.arange(len(e)), log_weights=lw), 100, 0)
    assert out.meta["ess"] == pytest.approx(1.0)
    assert np.all(out.coeffs == e.coeffs[7])


def test_resample_preserves_weighted_mean():
    e = _toy_ensemble()
    obs = np.abs(e.coeffs[:, 1]) ** 2
    before = float(e.weighted_mean(obs))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowESSWarning)
        out = importance_resample(e, 20_000, 5)
    after = np.abs(out.coeffs[:, 1]) ** 2
    se = math.hypot(after.std(ddof=1) / math.sqrt(after.size), obs.std() / math.sqrt(e.ess))
    assert abs(after.mean() - before) < 4 * se
    assert np.all(out.log_weights == 0.0)
    assert set(out.seeds.tolist()) <= set(e.seeds.tolist())


def test_resample_all_neg_inf_raises():
    e = _toy_ensemble(10)
    with pytest.raises(DegenerateEnsembleError):
        importance_resample(e.subset(np.arange(10), log_weights=np.full(10, -np.inf)), 5, 0)


def test_member_seeds_are_order_free():
    lat = build_lattice(2, 4)
    spec = GaussianSpec(lat)
    e = sample_ensemble(spec, 12, 99)
    assert np.array_equal(e[9].coeffs, sample_mu_a(spec, member_seed(99, 9)).coeffs)
    again = sample_ensemble(spec, 12, 99)
    assert np.array_equal(again.coeffs, e.coeffs)
    assert len(set(e.seeds.tolist())) == 12
    assert not np.array_equal(sample_ensemble(spec, 12, 100).coeffs, e.coeffs)


def test_ensemble_jsonl_round_trip(tmp_path):
    e = _toy_ensemble(30)
    path = tmp_path / "e.jsonl"
    e.to_jsonl(path, config_hash="abc")
    back = Ensemble.from_jsonl(path)
    assert back.lattice == e.lattice and back.provenance == "gibbs"
    assert np.array_equal(back.coeffs, e.coeffs)
    assert np.array_equal(back.log_weights, e.log_weights)
    assert np.array_equal(back.seeds, e.seeds)


def test_ensemble_validation():
    lat = build_lattice(1, 4)
    with pytest.raises(ConfigError):
        Ensemble(lat, np.zeros((2, 4)), np.zeros(2), np.zeros(2), "bogus")
    with pytest.raises(ValueError):
        Ensemble(lat, np.zeros((2, 4)), np.array([0.0, np.nan]), np.zeros(2))
    with pytest.raises(ValueError):
        Ensemble(lat, np.zeros((2, 3)), np.zeros(2), np.zeros(2))


def test_gaussian_spec_rejects_bad_a():
    with pytest.raises(ConfigError):
        GaussianSpec(build_lattice(1, 4), a=0.0)
