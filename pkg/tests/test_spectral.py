import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_coeffs
from wicknls.exceptions import AliasingError, ConfigError
from wicknls.spectral import (
    NormSpec,
    SpectralField,
    build_lattice,
    from_grid,
    h_beta_norm_sq,
    linear_phase,
    min_grid_size,
    resolve_dispersion,
    to_grid,
)


def test_lattice_d1_ncut4():
    lat = build_lattice(1, 4)
    assert lat.modes.ravel().tolist() == [-2, -1, 1, 2]


def test_lattice_d2_ncut1():
    lat = build_lattice(2, 1)
    assert {tuple(k) for k in lat.modes.tolist()} == {(1, 0), (-1, 0), (0, 1), (0, -1)}


def test_lattice_d2_ncut4_size():
    assert build_lattice(2, 4).n_modes == 12


@given(st.integers(1, 2), st.integers(1, 40))
def test_lattice_closed_under_negation_and_sorted(d, n_cut):
    lat = build_lattice(d, n_cut)
    assert np.all((lat.k2 >= 1) & (lat.k2 <= n_cut))
    assert np.array_equal(lat.modes[lat.neg_index], -lat.modes)
    assert [tuple(k) for k in lat.modes.tolist()] == sorted(tuple(k) for k in lat.modes.tolist())


@pytest.mark.parametrize("d,n_cut", [(3, 4), (2, 0), (1, 2.5)])
def test_bad_lattice_rejected(d, n_cut):
    with pytest.raises(ConfigError):
        build_lattice(d, n_cut)


def test_norm_examples():
    lat = build_lattice(2, 4)
    assert h_beta_norm_sq(SpectralField.zeros(lat), NormSpec(-0.5)) == 0.0
    f = SpectralField.single_mode(lat, (1, 0), 3.0)
    assert h_beta_norm_sq(f, NormSpec(-0.5)) == pytest.approx(9.0, abs=1e-14)


def test_norm_matches_extended_precision(rng):
    lat = build_lattice(2, 16)
    f = SpectralField(lat, random_coeffs(lat, rng))
    ref = math.fsum(float(k2) ** -0.5 * abs(c) ** 2 for k2, c in zip(lat.k2, f.coeffs))
    assert abs(h_beta_norm_sq(f, NormSpec(-0.5)) - ref) < 1e-12 * ref


@pytest.mark.parametrize("beta", [0.0, 0.1, float("nan")])
def test_norm_spec_requires_negative_beta(beta):
    with pytest.raises(ConfigError):
        NormSpec(beta)


def test_grid_examples(lattice, rng):
    G = min_grid_size(lattice)
    assert np.all(to_grid(SpectralField.zeros(lattice), G).values == 0)
    k = lattice.modes[0]
    single = to_grid(SpectralField.single_mode(lattice, k, 1.0), G + 3)
    assert np.allclose(np.abs(single.values), 1.0, atol=1e-12)
    f = SpectralField(lattice, random_coeffs(lattice, rng))
    back = from_grid(to_grid(f, G), lattice)
    assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-10


def test_grid_parseval(lattice, rng):
    f = SpectralField(lattice, random_coeffs(lattice, rng))
    g = to_grid(f, min_grid_size(lattice) + 2)
    assert np.mean(np.abs(g.values) ** 2) == pytest.approx(f.mass, rel=1e-12)


def test_aliasing_grid_rejected():
    lat = build_lattice(1, 16)
    with pytest.raises(AliasingError):
        to_grid(SpectralField.zeros(lat), min_grid_size(lat) - 1)


def test_linear_phase_examples(rng):
    lat = build_lattice(2, 4)
    f = SpectralField(lat, random_coeffs(lat, rng))
    assert np.array_equal(linear_phase(f, 0.0).coeffs, f.coeffs)
    unit = SpectralField.single_mode(lat, (0, 1), 1.0 + 2.0j)
    assert np.allclose(linear_phase(unit, math.pi).coeffs, -unit.coeffs, atol=1e-15)


@given(st.floats(-50, 50), st.floats(-50, 50), st.sampled_from(["integer", "2pi", "gibbs", 0.3]))
def test_linear_phase_unitary_and_composes(s, t, disp):
    lat = build_lattice(2, 8)
    f = SpectralField(lat, random_coeffs(lat, np.random.default_rng(7)))
    g = linear_phase(f, t, disp)
    assert g.mass == pytest.approx(f.mass, rel=1e-13)
    both = linear_phase(linear_phase(f, s, disp), t, disp)
    assert np.allclose(both.coeffs, linear_phase(f, s + t, disp).coeffs, atol=1e-9)


def test_dispersion_presets():
    assert resolve_dispersion("integer") == 1.0
    assert resolve_dispersion("2pi") == pytest.approx(4 * math.pi**2)
    assert resolve_dispersion("gibbs") == 0.5
    with pytest.raises(ConfigError):
        resolve_dispersion("bogus")
    with pytest.raises(ConfigError):
        resolve_dispersion(-1.0)


def test_field_record_round_trip(rng):
    lat = build_lattice(2, 8)
    f = SpectralField(lat, random_coeffs(lat, rng))
    g = SpectralField.from_record(f.to_record())
    assert g.lattice == lat and np.array_equal(g.coeffs, f.coeffs)


def test_field_is_immutable(rng):
    lat = build_lattice(1, 4)
    f = SpectralField(lat, random_coeffs(lat, rng))
    with pytest.raises(ValueError):
        f.coeffs[0] = 0.0


def test_field_rejects_nan():
    lat = build_lattice(1, 4)
    with pytest.raises(ValueError):
        SpectralField(lat, np.array([np.nan, 0, 0, 0]))
