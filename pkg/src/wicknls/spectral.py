"""Frequency lattices, spectral fields, Sobolev norms and grid transforms.

Fourier convention: ``u(x) = sum_k phi_k exp(2 pi i k.x)`` on the unit torus,
so that the grid mean of ``|u|^2`` equals ``sum_k |phi_k|^2``.  The zero mode
is never part of a lattice.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._validation import check_coeffs
from .exceptions import AliasingError, ConfigError

#: Linear frequency scale kappa in ``A_k = -kappa |k|^2``.  ``integer`` is the
#: frequency form of the equation, ``2pi`` the physical wavenumber under the
#: ``exp(2 pi i k.x)`` convention, ``gibbs`` the scale whose quadratic form
#: ``kappa |k|^2 |phi_k|^2`` matches the reference Gaussian measure exactly.
DISPERSION = {"integer": 1.0, "2pi": 4.0 * math.pi**2, "gibbs": 0.5}


def resolve_dispersion(dispersion):
    if isinstance(dispersion, str):
        try:
            return DISPERSION[dispersion]
        except KeyError:
            raise ConfigError(
                f"unknown dispersion {dispersion!r}; expected one of {sorted(DISPERSION)} or a float"
            ) from None
    value = float(dispersion)
    if not value > 0:
        raise ConfigError(f"dispersion must be > 0, got {dispersion!r}")
    return value


@dataclass(frozen=True, eq=False)
class FreqLattice:
    """All integer vectors ``k`` in ``Z^dim`` with ``1 <= |k|^2 <= n_cut``.

    Modes are stored lexicographically, so serialisation is reproducible and
    the lattice is closed under negation.
    """

    dim: int
    n_cut: int
    modes: np.ndarray = field(repr=False)

    def __eq__(self, other):
        return isinstance(other, FreqLattice) and (self.dim, self.n_cut) == (other.dim, other.n_cut)

    def __hash__(self):
        return hash((self.dim, self.n_cut))

    def __len__(self):
        return self.modes.shape[0]

    @property
    def n_modes(self):
        return self.modes.shape[0]

    @cached_property
    def k2(self):
        """Squared norms ``|k|^2`` (float)."""
        return (self.modes.astype(np.int64) ** 2).sum(axis=1).astype(float)

    @cached_property
    def k_max(self):
        return int(np.abs(self.modes).max())

    @cached_property
    def index(self):
        """Map from mode tuple to position."""
        return {tuple(int(c) for c in k): i for i, k in enumerate(self.modes)}

    @cached_property
    def neg_index(self):
        """Position of ``-k`` for every mode."""
        return np.array([self.index[tuple(-int(c) for c in k)] for k in self.modes])

    def position(self, k):
        key = (int(k),) if np.ndim(k) == 0 else tuple(int(c) for c in k)
        try:
            return self.index[key]
        except KeyError:
            raise KeyError(f"mode {key} is not on the lattice (dim={self.dim}, n_cut={self.n_cut})") from None

    def mask(self, bound=None, *, squared=True, strict=False):
        """Boolean mask of modes inside a cutoff.

        ``squared=True`` compares ``|k|^2`` with ``bound``; otherwise ``|k|`` is
        compared.  ``strict`` switches ``<=`` to ``<``.  ``bound=None`` selects
        every mode.
        """
        if bound is None:
            return np.ones(self.n_modes, dtype=bool)
        lhs = self.k2 if squared else np.sqrt(self.k2)
        return lhs < bound if strict else lhs <= bound


def build_lattice(d, n_cut):
    """Enumerate ``{k in Z^d : 1 <= |k|^2 <= n_cut}`` in lexicographic order."""
    if d not in (1, 2) or isinstance(d, bool):
        raise ConfigError(f"dimension must be 1 or 2, got {d!r}")
    if not isinstance(n_cut, (int, np.integer)) or n_cut < 1:
        raise ConfigError(f"n_cut must be an integer >= 1, got {n_cut!r}")
    r = math.isqrt(int(n_cut))
    modes = [
        k for k in itertools.product(range(-r, r + 1), repeat=d) if 1 <= sum(c * c for c in k) <= n_cut
    ]
    return FreqLattice(int(d), int(n_cut), np.array(modes, dtype=np.int64).reshape(-1, d))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex Fourier coefficients ``phi_k`` indexed by ``lattice.modes``."""

    lattice: FreqLattice
    coeffs: np.ndarray

    def __post_init__(self):
        c = check_coeffs(self.coeffs, self.lattice.n_modes, ensure_2d=False, name="coeffs")
        if c.ndim != 1:
            raise ValueError(f"coeffs must be 1-D, got shape {c.shape}")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, lattice):
        return cls(lattice, np.zeros(lattice.n_modes, dtype=complex))

    @classmethod
    def single_mode(cls, lattice, k, value):
        c = np.zeros(lattice.n_modes, dtype=complex)
        c[lattice.position(k)] = value
        return cls(lattice, c)

    def __getitem__(self, k):
        return self.coeffs[self.lattice.position(k)]

    def __mul__(self, scalar):
        return SpectralField(self.lattice, self.coeffs * scalar)

    __rmul__ = __mul__

    def __add__(self, other):
        _same_lattice(self, other)
        return SpectralField(self.lattice, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same_lattice(self, other)
        return SpectralField(self.lattice, self.coeffs - other.coeffs)

    @property
    def mass(self):
        """Plain mass ``sum_k |phi_k|^2``."""
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def to_record(self):
        rows = [
            [*(int(c) for c in k), float(z.real), float(z.imag)] for k, z in zip(self.lattice.modes, self.coeffs)
        ]
        return {"dim": self.lattice.dim, "n_cut": self.lattice.n_cut, "coeffs": rows}

    @classmethod
    def from_record(cls, record):
        lattice = build_lattice(int(record["dim"]), int(record["n_cut"]))
        coeffs = np.zeros(lattice.n_modes, dtype=complex)
        seen = set()
        for row in record["coeffs"]:
            *k, re, im = row
            i = lattice.position(k)
            seen.add(i)
            coeffs[i] = complex(re, im)
        if len(seen) != lattice.n_modes:
            raise ValueError("record does not list every lattice mode")
        return cls(lattice, coeffs)

    def to_json(self):
        return json.dumps(self.to_record(), separators=(",", ":"))


def _same_lattice(a, b):
    if a.lattice != b.lattice:
        raise ValueError("fields live on different lattices")


@dataclass(frozen=True)
class NormSpec:
    """Sobolev exponent of ``H^beta``; only negative exponents are allowed."""

    beta: float

    def __post_init__(self):
        if not (isinstance(self.beta, (int, float)) and math.isfinite(self.beta) and self.beta < 0):
            raise ConfigError(f"beta must be a finite real < 0, got {self.beta!r}")


def sobolev_weights(lattice, beta):
    return lattice.k2**beta


def h_beta_norm_sq(f, ns):
    """``sum_k |k|^{2 beta} |phi_k|^2``."""
    return float(np.sum(sobolev_weights(f.lattice, ns.beta) * np.abs(f.coeffs) ** 2))


# --- grid transforms -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridField:
    """Samples of ``u`` at ``x_j = j / G`` on a ``G^dim`` grid."""

    grid_size: int
    values: np.ndarray

    @property
    def dim(self):
        return self.values.ndim


def min_grid_size(lattice, degree=1):
    """Smallest grid on which a degree-``degree`` product is alias free on the lattice.

    degree 1 is a lossless round trip (``2 k_max + 1``); the cubic product
    needs ``4 k_max + 1``.
    """
    if degree == 1:
        return 2 * lattice.k_max + 1
    return (degree + 1) * lattice.k_max + 1


def _grid_index(lattice, G):
    return tuple(lattice.modes[:, i] % G for i in range(lattice.dim))


def synthesize(lattice, coeffs, G):
    """Grid values for coefficient arrays of shape ``(..., n_modes)``."""
    coeffs = np.asarray(coeffs, dtype=complex)
    lead = coeffs.shape[:-1]
    A = np.zeros(lead + (G,) * lattice.dim, dtype=complex)
    A[(Ellipsis,) + _grid_index(lattice, G)] = coeffs
    axes = tuple(range(len(lead), len(lead) + lattice.dim))
    return np.fft.ifftn(A, axes=axes) * G**lattice.dim


def analyze(lattice, values, G):
    """Lattice coefficients of grid values of shape ``(..., G, ..., G)``."""
    values = np.asarray(values, dtype=complex)
    n_lead = values.ndim - lattice.dim
    axes = tuple(range(n_lead, values.ndim))
    F = np.fft.fftn(values, axes=axes) / G**lattice.dim
    return F[(Ellipsis,) + _grid_index(lattice, G)]


def to_grid(f, G):
    if G < min_grid_size(f.lattice):
        raise AliasingError(f"grid size {G} < {min_grid_size(f.lattice)}: distinct modes would alias")
    return GridField(int(G), synthesize(f.lattice, f.coeffs, G))


def from_grid(g, lattice):
    if g.dim != lattice.dim:
        raise ValueError("grid and lattice dimensions differ")
    if g.grid_size < min_grid_size(lattice):
        raise AliasingError(f"grid size {g.grid_size} < {min_grid_size(lattice)}: distinct modes would alias")
    return SpectralField(lattice, analyze(lattice, g.values, g.grid_size))


def phase_factors(lattice, t, dispersion=1.0):
    return np.exp(-1j * ((resolve_dispersion(dispersion) * lattice.k2) * t))


def linear_phase(f, t, dispersion=1.0):
    """Exact linear propagator ``phi_k -> exp(-i kappa |k|^2 t) phi_k``."""
    return SpectralField(f.lattice, phase_factors(f.lattice, t, dispersion) * f.coeffs)
