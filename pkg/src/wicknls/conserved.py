"""Plain and renormalized mass, the truncated Hamiltonian and level-set projection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ProjectionError
from .measures import quartic_values
from .spectral import FreqLattice, resolve_dispersion


@dataclass(frozen=True, eq=False)
class MassSpec:
    """Per-mode counterterms ``Z_k`` of the renormalized mass.

    ``Z_k = 2 / |k|^2`` in d=2 (the ``mu_2`` mean of ``|phi_k|^2``) and 0 in d=1.
    """

    lattice: FreqLattice
    Z: np.ndarray = field(repr=False)

    @classmethod
    def for_lattice(cls, lattice, a=2.0):
        Z = 2.0 * lattice.k2 ** (-a / 2) if lattice.dim == 2 else np.zeros(lattice.n_modes)
        return cls(lattice, Z)

    @property
    def d(self):
        return self.lattice.dim

    @property
    def total_Z(self):
        return math.fsum(self.Z)


def mass_values(coeffs):
    """``sum |phi_k|^2`` along the last axis."""
    coeffs = np.asarray(coeffs)
    return np.sum(coeffs.real**2 + coeffs.imag**2, axis=-1)


def plain_mass(f):
    return float(mass_values(f.coeffs))


def renormalized_mass_values(coeffs, ms):
    return mass_values(coeffs) - ms.total_Z


def renormalized_mass(f, ms):
    """``E(phi) = sum_k (|phi_k|^2 - Z_k)``; may be negative."""
    return math.fsum(np.abs(f.coeffs) ** 2 - ms.Z)


def hamiltonian_values(lattice, coeffs, aN, G=None, dispersion="integer"):
    kappa = resolve_dispersion(dispersion)
    coeffs = np.asarray(coeffs)
    mass = mass_values(coeffs)
    kinetic = np.sum(kappa * lattice.k2 * (coeffs.real**2 + coeffs.imag**2), axis=-1)
    return kinetic + 0.5 * quartic_values(lattice, coeffs, G) - 2.0 * aN * mass + aN**2


def hamiltonian_hn(f, aN, G=None, dispersion="integer"):
    """``kappa sum |k|^2 |phi_k|^2 + 1/2 int |u|^4 - 2 aN sum |phi_k|^2 + aN^2``.

    ``kappa`` is the dispersion scale of the flow (see
    :data:`wicknls.spectral.DISPERSION`); ``"2pi"`` gives the physical
    ``|2 pi k|^2`` gradient term.  ``H_N`` is conserved by the flow with the
    same dispersion and counterterm ``C = 2 aN``.
    """
    return float(hamiltonian_values(f.lattice, f.coeffs, aN, G, dispersion))


def grad_E_h1_norm_sq(f):
    """Squared ``H^1`` norm of the gradient of ``E``: ``4 sum |phi_k|^2 / |k|^2``."""
    return float(4.0 * np.sum(np.abs(f.coeffs) ** 2 / f.lattice.k2))


def projection_factors(coeffs, r, ms):
    """Radial factors ``sqrt((r + total_Z) / sum |phi_k|^2)`` for each row."""
    target = r + ms.total_Z
    if not target > 0:
        raise ProjectionError(f"level r={r} is infeasible: r + total_Z = {target} <= 0")
    mass = mass_values(coeffs)
    if np.any(mass == 0):
        raise ProjectionError("cannot project the zero field onto a level set")
    return np.sqrt(target / mass)


def project_to_level_set(f, r, ms):
    """Rescale ``f`` radially so that its renormalized mass is exactly ``r``."""
    lam = float(projection_factors(f.coeffs, r, ms))
    return type(f)(f.lattice, lam * f.coeffs)
