"""Sampling the truncated Gibbs measure ``exp(-W/2) d mu_2``.

``W = int |u|^4 - 4 aN int |u|^2 + 2 aN^2`` is the Wick-ordered quartic.
Plain importance weighting of ``mu_2`` draws degenerates quickly (the spread
of ``W`` is tens to hundreds at ``n_cut = 8``), so the weights are introduced
gradually: ``exp(-lam W / 2)`` with ``lam`` rising from 0 to 1, resampling
between stages and moving members with Hamiltonian Monte Carlo at the current
``lam``.  The harmonic part ``1/2 sum |k|^2 |phi_k|^2`` is integrated exactly,
so the kick step only sees the quartic force.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from ._validation import check_is_fitted, check_positive, check_random_state
from .exceptions import ConfigError
from .measures import (
    Ensemble,
    GaussianSpec,
    a_n_constant,
    effective_sample_size,
    sample_ensemble,
    wick_quartic_values,
)
from .nonlinearity import cubic_fft
from .spectral import build_lattice, min_grid_size


def _systematic(log_w, rng):
    n = log_w.size
    w = np.exp(log_w - logsumexp(log_w))
    cum = np.cumsum(w)
    cum[-1] = 1.0
    return np.searchsorted(cum, (rng.random() + np.arange(n)) / n)


class _Target:
    def __init__(self, lattice, aN, G):
        self.lattice = lattice
        self.aN = aN
        self.G = G
        self.k2 = lattice.k2

    def W(self, X):
        return wick_quartic_values(self.lattice, X, self.aN, self.G)

    def potential(self, X, lam):
        return 0.5 * np.sum(self.k2 * np.abs(X) ** 2, axis=-1) + 0.5 * lam * self.W(X)

    def force(self, X, lam):
        """Complex gradient ``dV/dx + i dV/dy`` of ``lam W / 2``."""
        return 2.0 * lam * (cubic_fft(self.lattice, X, self.G) - 2.0 * self.aN * X)


def hmc_sweep(target, X, lam, step, n_leapfrog, rng):
    """One HMC move per row; returns ``(X_new, accepted mask)``."""
    k2 = target.k2
    n, m = X.shape
    P = (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) * np.sqrt(k2)
    h0 = target.potential(X, lam) + 0.5 * np.sum(np.abs(P) ** 2 / k2, axis=-1)
    Y, Q = X.copy(), P.copy()
    c, s = math.cos(step), math.sin(step)
    Q -= 0.5 * step * target.force(Y, lam)
    for i in range(n_leapfrog):
        Y, Q = c * Y + (s / k2) * Q, c * Q - (s * k2) * Y
        f = target.force(Y, lam)
        Q -= (step if i < n_leapfrog - 1 else 0.5 * step) * f
    h1 = target.potential(Y, lam) + 0.5 * np.sum(np.abs(Q) ** 2 / k2, axis=-1)
    log_acc = np.where(np.isfinite(h1), h0 - h1, -np.inf)
    accept = np.log(rng.random(n)) < log_acc
    out = np.where(accept[:, None], Y, X)
    return out, accept


def sample_gibbs(lattice, n, seed, *, a=2.0, aN=None, ess_fraction=0.5, step=0.25, trajectory=1.5,
                 moves_per_stage=2, final_moves=10, target_accept=0.8, max_stages=500):
    """Tempered SMC draws from ``exp(-W/2) d mu_a`` with uniform final weights.

    Members start as independent ``mu_a`` draws; ``seeds`` of the result are
    the seeds of each member's ancestor.  Stage diagnostics are in ``meta``.
    """
    check_positive(n, "n", integer=True)
    if not 0 < ess_fraction < 1:
        raise ConfigError(f"ess_fraction must lie in (0, 1), got {ess_fraction!r}")
    aN = a_n_constant(lattice) if aN is None else float(aN)
    G = min_grid_size(lattice, 3)
    target = _Target(lattice, aN, G)
    base = sample_ensemble(GaussianSpec(lattice, a), n, seed)
    rng = check_random_state(np.random.SeedSequence(int(seed), spawn_key=(2**31,)))
    X, seeds = base.coeffs.copy(), base.seeds.copy()
    n_leap = max(1, int(round(trajectory / step)))
    lam, stages, ess_log, acc_log = 0.0, [0.0], [], []

    def move(X, lam, count):
        nonlocal step, n_leap
        for _ in range(count):
            X, acc = hmc_sweep(target, X, lam, step, n_leap, rng)
            rate = float(acc.mean())
            acc_log.append(rate)
            step = float(np.clip(step * math.exp(rate - target_accept), 0.02, 1.0))
            n_leap = max(1, int(round(trajectory / step)))
        return X

    while lam < 1.0:
        if len(stages) > max_stages:
            raise RuntimeError(f"tempering did not reach lam=1 in {max_stages} stages")
        W = target.W(X)
        lo, hi = 0.0, 1.0 - lam
        if effective_sample_size(-0.5 * hi * W) < ess_fraction * n:
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if effective_sample_size(-0.5 * mid * W) >= ess_fraction * n:
                    lo = mid
                else:
                    hi = mid
            hi = max(lo, 1e-6)
        lw = -0.5 * hi * W
        ess_log.append(effective_sample_size(lw))
        lam = min(1.0, lam + hi)
        stages.append(lam)
        idx = np.sort(_systematic(lw, rng))
        X, seeds = X[idx], seeds[idx]
        X = move(X, lam, moves_per_stage)
    X = move(X, 1.0, final_moves)
    meta = {
        "master_seed": int(seed),
        "a": a,
        "aN": aN,
        "lambda_schedule": stages,
        "stage_ess": ess_log,
        "min_stage_ess": min(ess_log) if ess_log else float(n),
        "acceptance": acc_log,
        "final_step": step,
        "unique_ancestors": int(np.unique(seeds).size),
    }
    return Ensemble(lattice, X, np.zeros(n), seeds, "gibbs", meta)


class GibbsSampler(BaseEstimator):
    """Estimator wrapper around :func:`sample_gibbs`.

    ``fit`` draws the ensemble; ``sample`` returns it, ``score_samples`` gives
    the unnormalised Gibbs log-density relative to ``mu_2``.
    """

    def __init__(self, dim=1, n_cut=8, n_members=1000, seed=0, a=2.0, ess_fraction=0.5, final_moves=10):
        self.dim = dim
        self.n_cut = n_cut
        self.n_members = n_members
        self.seed = seed
        self.a = a
        self.ess_fraction = ess_fraction
        self.final_moves = final_moves

    def fit(self, X=None, y=None):
        self.lattice_ = build_lattice(self.dim, self.n_cut)
        self.aN_ = a_n_constant(self.lattice_)
        self.ensemble_ = sample_gibbs(
            self.lattice_, self.n_members, self.seed, a=self.a, ess_fraction=self.ess_fraction,
            final_moves=self.final_moves,
        )
        return self

    def sample(self):
        check_is_fitted(self, "ensemble_")
        return self.ensemble_

    def score_samples(self, X):
        check_is_fitted(self, "lattice_")
        return -0.5 * wick_quartic_values(self.lattice_, np.asarray(X), self.aN_)
