"""Gaussian reference measures, Gibbs log-weights and weighted ensembles."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._validation import check_coeffs, check_random_state
from .exceptions import ConfigError, DegenerateEnsembleError
from .spectral import FreqLattice, SpectralField, min_grid_size, synthesize

PROVENANCES = ("mu_a", "gibbs", "conditional")


class QuadratureWarning(UserWarning):
    """Grid too coarse for the exact quartic quadrature."""


class LowESSWarning(UserWarning):
    """Effective sample size fell below the reporting threshold."""


@dataclass(frozen=True)
class GaussianSpec:
    """Product Gaussian measure with ``E|phi_k|^2 = 2 / |k|^a``."""

    lattice: FreqLattice
    a: float = 2.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise ConfigError(f"a must be > 0, got {self.a!r}")

    @property
    def std(self):
        """Standard deviation of each real and imaginary part, ``|k|^{-a/2}``."""
        return self.lattice.k2 ** (-self.a / 4)


def member_seed(master_seed, index):
    """64-bit seed of ensemble member ``index``; independent of generation order."""
    state = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),)).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def _draw(spec, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2, spec.lattice.n_modes))
    return (z[0] + 1j * z[1]) * spec.std


def sample_mu_a(spec, seed):
    """One draw from ``mu_a``: real and imaginary parts i.i.d. ``N(0, |k|^{-a})``."""
    return SpectralField(spec.lattice, _draw(spec, seed))


def moment_oracle(k, p, a=2.0):
    """``E|phi_k|^{2p} = 2^p p! |k|^{-a p}``."""
    if int(p) != p or p < 1:
        raise ConfigError(f"p must be a positive integer, got {p!r}")
    k2 = float(np.sum(np.asarray(k, dtype=float) ** 2))
    return 2.0**p * math.factorial(int(p)) * k2 ** (-a * p / 2)


def a_n_constant(lattice, bound=None, *, squared=True, strict=False):
    """``2 sum |k|^{-2}`` over the modes inside the cutoff (all modes by default)."""
    mask = lattice.mask(bound, squared=squared, strict=strict)
    return math.fsum(2.0 / lattice.k2[mask])


def quartic_values(lattice, coeffs, G=None):
    """Grid mean of ``|u|^4`` for arrays of shape ``(..., n_modes)``."""
    exact = min_grid_size(lattice, 3)
    G = exact if G is None else int(G)
    if G < exact:
        warnings.warn(f"grid size {G} < {exact}: quartic quadrature is not exact", QuadratureWarning, stacklevel=2)
    u = synthesize(lattice, coeffs, G)
    axes = tuple(range(u.ndim - lattice.dim, u.ndim))
    return np.mean((u.real**2 + u.imag**2) ** 2, axis=axes)


def quartic_integral(f, G=None):
    """``int |u|^4``; exact for ``G >= 4 k_max + 1``."""
    return float(quartic_values(f.lattice, f.coeffs, G))


def wick_quartic_values(lattice, coeffs, aN, G=None):
    """``int |u|^4 - 4 aN int |u|^2 + 2 aN^2``, the Wick-ordered quartic."""
    mass = np.sum(np.abs(coeffs) ** 2, axis=-1)
    return quartic_values(lattice, coeffs, G) - 4.0 * aN * mass + 2.0 * aN**2


def gibbs_log_weights(lattice, coeffs, aN, G=None):
    return -0.5 * wick_quartic_values(lattice, coeffs, aN, G)


def gibbs_log_weight(f, aN, G=None):
    """``-1/2 int |u|^4 + 2 aN sum |phi_k|^2 - aN^2``."""
    return float(gibbs_log_weights(f.lattice, f.coeffs, aN, G))


def effective_sample_size(log_weights):
    """``(sum w)^2 / sum w^2`` computed in log space."""
    lw = np.asarray(log_weights, dtype=float)
    finite = np.isfinite(lw)
    if not finite.any():
        raise DegenerateEnsembleError("all log-weights are -inf")
    lw = lw[finite]
    return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


@dataclass(eq=False)
class Ensemble:
    """Weighted, seeded collection of fields on one lattice.

    ``coeffs`` holds one row per member.  ``seeds`` records the per-member seed
    of the generating draw (for resampled ensembles, the seed of the source
    member).
    """

    lattice: FreqLattice
    coeffs: np.ndarray
    log_weights: np.ndarray
    seeds: np.ndarray
    provenance: str = "mu_a"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = check_coeffs(self.coeffs, self.lattice.n_modes, name="coeffs")
        n = self.coeffs.shape[0]
        self.log_weights = np.asarray(self.log_weights, dtype=float).reshape(n)
        self.seeds = np.asarray(self.seeds, dtype=np.uint64).reshape(n)
        if np.any(np.isnan(self.log_weights)) or np.any(self.log_weights == np.inf):
            raise ValueError("log_weights must be finite or -inf")
        if self.provenance not in PROVENANCES:
            raise ConfigError(f"provenance must be one of {PROVENANCES}, got {self.provenance!r}")

    def __len__(self):
        return self.coeffs.shape[0]

    def __getitem__(self, i):
        return SpectralField(self.lattice, self.coeffs[i])

    @property
    def members(self):
        return [self[i] for i in range(len(self))]

    @property
    def weights(self):
        """Normalised weights."""
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    @property
    def ess(self):
        return effective_sample_size(self.log_weights)

    def subset(self, idx, **changes):
        idx = np.asarray(idx)
        kw = dict(
            lattice=self.lattice,
            coeffs=self.coeffs[idx],
            log_weights=self.log_weights[idx],
            seeds=self.seeds[idx],
            provenance=self.provenance,
            meta=dict(self.meta),
        )
        kw.update(changes)
        return Ensemble(**kw)

    def with_coeffs(self, coeffs, **changes):
        kw = dict(
            lattice=self.lattice,
            coeffs=coeffs,
            log_weights=self.log_weights.copy(),
            seeds=self.seeds.copy(),
            provenance=self.provenance,
            meta=dict(self.meta),
        )
        kw.update(changes)
        return Ensemble(**kw)

    def weighted_mean(self, values):
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))

    # persistence: one JSON object per member, ordered by member index
    def to_jsonl(self, path, config_hash=None):
        with open(path, "w") as fh:
            for i in range(len(self)):
                rec = {
                    "index": i,
                    "seed": int(self.seeds[i]),
                    "log_weight": float(self.log_weights[i]),
                    "provenance": self.provenance,
                    "field": self[i].to_record(),
                }
                if config_hash is not None:
                    rec["config_hash"] = config_hash
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")

    @classmethod
    def from_jsonl(cls, path):
        rows, lw, seeds, prov, lattice = [], [], [], None, None
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                f = SpectralField.from_record(rec["field"])
                if lattice is None:
                    lattice = f.lattice
                elif f.lattice != lattice:
                    raise ValueError("ensemble members live on different lattices")
                rows.append(f.coeffs)
                lw.append(rec["log_weight"])
                seeds.append(rec["seed"])
                prov = rec.get("provenance", "mu_a")
        return cls(lattice, np.array(rows), np.array(lw), np.array(seeds, dtype=np.uint64), prov)


def sample_ensemble(spec, n, seed, *, provenance="mu_a"):
    """``n`` independent draws from ``mu_a`` with counter-based member seeds."""
    seeds = np.array([member_seed(seed, i) for i in range(n)], dtype=np.uint64)
    coeffs = np.empty((n, spec.lattice.n_modes), dtype=complex)
    for i, s in enumerate(seeds):
        coeffs[i] = _draw(spec, int(s))
    return Ensemble(spec.lattice, coeffs, np.zeros(n), seeds, provenance, {"master_seed": int(seed), "a": spec.a})


def sample_mu_a_array(spec, n, rng):
    """Fast batched draws from one generator (no per-member seeds)."""
    rng = check_random_state(rng)
    z = rng.standard_normal((2, n, spec.lattice.n_modes))
    return (z[0] + 1j * z[1]) * spec.std


def importance_resample(e, m, seed, *, ess_threshold=0.1):
    """Multinomial resampling proportional to ``exp(log_weights)``.

    The returned ensemble has uniform weights; ``meta["ess"]`` holds the
    effective sample size of the input weights.
    """
    lw = np.asarray(e.log_weights, dtype=float)
    if not np.isfinite(lw).any():
        raise DegenerateEnsembleError("cannot resample: every log-weight is -inf")
    ess = effective_sample_size(lw)
    p = np.exp(lw - logsumexp(lw))
    rng = check_random_state(seed)
    idx = np.sort(rng.choice(len(e), size=int(m), replace=True, p=p))
    if ess < ess_threshold * m:
        warnings.warn(f"effective sample size {ess:.1f} < {ess_threshold} * {m}", LowESSWarning, stacklevel=2)
    out = e.subset(idx, log_weights=np.zeros(len(idx)))
    out.meta.update(ess=ess, source_size=len(e))
    return out
