"""Cubic frequency convolution, Wick counterterm and second-moment oracles.

``B_k(phi) = sum_{p + q - r = k} phi_p phi_q conj(phi_r)`` with ``p, q, r``
restricted to the lattice; on the grid this is the lattice projection of
``|u|^2 u``.  Under the reference Gaussian measure the modes are independent
complex Gaussians with ``E|phi_k|^2 = sigma_k = 2 / |k|^a``, and subtracting
``C_N phi_k`` with ``C_N = 2 D_N``, ``D_N = sum sigma_l``, removes every
self-contraction of ``B``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_coeffs, check_is_fitted, check_random_state
from .exceptions import AliasingError, ConfigError
from .spectral import (
    FreqLattice,
    NormSpec,
    SpectralField,
    analyze,
    build_lattice,
    min_grid_size,
    sobolev_weights,
    synthesize,
)


@dataclass(frozen=True, eq=False)
class WickSpec:
    """Counterterm ``C_N`` subtracted from ``B``.

    ``mask`` selects the modes summed in ``D_N = sum 2 / |l|^a``; by default
    the whole lattice.  ``renormalized=False`` gives the plain nonlinearity.
    """

    lattice: FreqLattice
    mask: np.ndarray = field(repr=False)
    a: float = 2.0
    renormalized: bool = True

    @classmethod
    def for_lattice(cls, lattice, bound=None, *, squared=True, strict=False, a=2.0):
        return cls(lattice, lattice.mask(bound, squared=squared, strict=strict), float(a), True)

    @classmethod
    def plain(cls, lattice, a=2.0):
        return cls(lattice, lattice.mask(None), float(a), False)

    @classmethod
    def default(cls, lattice):
        """Wick-ordered in d=2, plain in d=1 (the counterterm converges there)."""
        return cls.for_lattice(lattice) if lattice.dim == 2 else cls.plain(lattice)

    @property
    def D(self):
        return math.fsum(2.0 * self.lattice.k2[self.mask] ** (-self.a / 2))

    @property
    def C(self):
        return 2.0 * self.D if self.renormalized else 0.0


def mode_variances(lattice, a=2.0):
    """``sigma_k = E|phi_k|^2 = 2 / |k|^a``."""
    return 2.0 * lattice.k2 ** (-a / 2)


# --- B itself --------------------------------------------------------------


def _triple_table(lattice):
    """Index arrays (p, q, r, k) for every on-lattice triple with p + q - r = k."""
    cache = lattice.__dict__.setdefault("_triple_table", None)
    if cache is not None:
        return cache
    modes = lattice.modes
    lookup = lattice.index
    ps, qs, rs, ks = [], [], [], []
    n = lattice.n_modes
    for ip in range(n):
        for iq in range(n):
            s = modes[ip] + modes[iq]
            for ir in range(n):
                ik = lookup.get(tuple(int(c) for c in s - modes[ir]))
                if ik is not None:
                    ps.append(ip)
                    qs.append(iq)
                    rs.append(ir)
                    ks.append(ik)
    table = tuple(np.array(v, dtype=np.int64) for v in (ps, qs, rs, ks))
    lattice.__dict__["_triple_table"] = table
    return table


def cubic_direct(lattice, coeffs):
    """Direct triple sum for coefficient arrays of shape ``(..., n_modes)``."""
    coeffs = np.asarray(coeffs, dtype=complex)
    p, q, r, k = _triple_table(lattice)
    terms = coeffs[..., p] * coeffs[..., q] * np.conj(coeffs[..., r])
    out = np.zeros(coeffs.shape, dtype=complex)
    if coeffs.ndim == 1:
        np.add.at(out, k, terms)
    else:
        flat = out.reshape(-1, lattice.n_modes)
        t = terms.reshape(flat.shape[0], -1)
        for i in range(flat.shape[0]):
            np.add.at(flat[i], k, t[i])
    return out


def cubic_fft(lattice, coeffs, G=None):
    """Lattice projection of ``|u|^2 u`` computed on a zero-padded grid."""
    G = min_grid_size(lattice, 3) if G is None else int(G)
    if G < min_grid_size(lattice, 3):
        raise AliasingError(
            f"grid size {G} < {min_grid_size(lattice, 3)}: the cubic product aliases back onto the lattice"
        )
    u = synthesize(lattice, coeffs, G)
    return analyze(lattice, (u.real**2 + u.imag**2) * u, G)


def b_direct(f):
    """Exact ``B^n(phi)`` by enumeration of frequency triples."""
    return SpectralField(f.lattice, cubic_direct(f.lattice, f.coeffs))


def b_fft(f, G=None):
    """``B^n(phi)`` through the grid; agrees with :func:`b_direct` to rounding."""
    return SpectralField(f.lattice, cubic_fft(f.lattice, f.coeffs, G))


def wick_b(f, w, G=None, method="fft"):
    """``(:B:)^N = B - C_N phi`` coefficientwise."""
    if w.lattice != f.lattice:
        raise ValueError("WickSpec and field lattices differ")
    cubic = cubic_fft(f.lattice, f.coeffs, G) if method == "fft" else cubic_direct(f.lattice, f.coeffs)
    return SpectralField(f.lattice, cubic - w.C * f.coeffs)


def directional_derivative(lattice, coeffs, j, w, G=None):
    """Derivative of ``:B:`` along the real direction ``e_j``.

    The five-point stencil is exact for cubic polynomials, so the only error
    is rounding.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    e = np.zeros(lattice.n_modes)
    e[lattice.position(j)] = 1.0
    scale = np.sqrt(np.mean(np.abs(coeffs) ** 2)) or 1.0
    h = 0.5 * scale

    def field_at(step):
        c = coeffs + step * e
        return cubic_fft(lattice, c, G) - w.C * c

    return (8.0 * (field_at(h) - field_at(-h)) - (field_at(2 * h) - field_at(-2 * h))) / (12.0 * h)


class WickNonlinearity(TransformerMixin, BaseEstimator):
    """Transformer mapping coefficient rows to ``:B:(phi)`` rows.

    Parameters
    ----------
    dim, n_cut : lattice parameters.
    renormalize : subtract ``C_N phi`` (``None`` picks Wick in d=2, plain in d=1).
    method : ``"fft"`` or ``"direct"``.
    grid_size : FFT grid; defaults to the alias-free minimum.
    """

    def __init__(self, dim=2, n_cut=8, renormalize=None, method="fft", grid_size=None):
        self.dim = dim
        self.n_cut = n_cut
        self.renormalize = renormalize
        self.method = method
        self.grid_size = grid_size

    def fit(self, X=None, y=None):
        self.lattice_ = build_lattice(self.dim, self.n_cut)
        if self.method not in ("fft", "direct"):
            raise ConfigError(f"method must be 'fft' or 'direct', got {self.method!r}")
        renorm = (self.dim == 2) if self.renormalize is None else bool(self.renormalize)
        self.wick_ = WickSpec.for_lattice(self.lattice_) if renorm else WickSpec.plain(self.lattice_)
        self.counterterm_ = self.wick_.C
        if X is not None:
            check_coeffs(X, self.lattice_.n_modes)
        self.n_features_in_ = self.lattice_.n_modes
        return self

    def transform(self, X):
        check_is_fitted(self, "lattice_")
        X = check_coeffs(X, self.lattice_.n_modes)
        if self.method == "fft":
            out = cubic_fft(self.lattice_, X, self.grid_size)
        else:
            out = cubic_direct(self.lattice_, X)
        return out - self.counterterm_ * X


# --- analytic oracles --------------------------------------------------------


def _sigma_lookup(lattice, a):
    sig = mode_variances(lattice, a)
    return sig, lattice.index


def second_moment_terms(k, w, form="exact"):
    """The two sums whose total is ``E|B_k - C_N phi_k|^2`` when ``C_N = 2 D_N``.

    ``I1`` collects the triples with a repeated index, ``I2`` the triples with
    three distinct roles.  ``form="printed"`` reproduces the coefficients of the
    published expansion (``E|phi_k|^6`` and ``4 E|phi_k|^2 sum E|phi_l|^4``),
    which over-count the repeated-index contractions; ``form="exact"`` carries
    the weights obtained from a complete pairing count.
    """
    lattice = w.lattice
    sig, lookup = _sigma_lookup(lattice, w.a)
    ik = lattice.position(k)
    kv = lattice.modes[ik]
    s_k = sig[ik]
    m4 = 2.0 * sig**2  # E|phi|^4
    m6 = 6.0 * sig**3  # E|phi|^6
    others = math.fsum(np.delete(m4, ik))
    if form == "exact":
        i1 = [m6[ik] / 3.0, 2.0 * s_k * others]
    elif form == "printed":
        i1 = [m6[ik], 4.0 * s_k * others]
    else:
        raise ValueError(f"form must be 'exact' or 'printed', got {form!r}")
    # p = q = k - m (m != 0), r = k - 2m
    for ip, p in enumerate(lattice.modes):
        if ip == ik:
            continue
        ir = lookup.get(tuple(int(c) for c in 2 * p - kv))
        if ir is not None:
            i1.append(m4[ip] * sig[ir])
    i2 = []
    for ip, p in enumerate(lattice.modes):
        if ip == ik:
            continue
        for iq, q in enumerate(lattice.modes):
            if iq == ik or iq == ip:
                continue
            ir = lookup.get(tuple(int(c) for c in p + q - kv))
            if ir is not None:
                i2.append(2.0 * sig[ip] * sig[iq] * sig[ir])
    return {"I1": math.fsum(i1), "I2": math.fsum(i2)}


def second_moment_oracle(k, w, form="exact"):
    """``E_{mu_a} |B_k - C_N phi_k|^2`` by direct summation.

    When the counterterm does not match the lattice (``C != 2 D_lattice``, e.g.
    the plain nonlinearity or a narrower cutoff predicate) the residual
    ``(2 D_lattice - C)^2 sigma_k`` is added.
    """
    t = second_moment_terms(k, w, form)
    sig = mode_variances(w.lattice, w.a)
    d_lat = math.fsum(sig)
    mismatch = (2.0 * d_lat - w.C) ** 2 * sig[w.lattice.position(k)]
    return t["I1"] + t["I2"] + mismatch


def _exact_second_moments_all(lattice, a=2.0, C=None):
    """Vector of ``E|B_k - C phi_k|^2`` over the lattice via FFT convolution.

    ``2 sum_{p+q-r=k} sigma_p sigma_q sigma_r`` equals ``I1 + I2`` (exact form);
    used for large cutoffs where the pairwise loops are too slow.
    """
    sig = mode_variances(lattice, a)
    G = 4 * lattice.k_max + 2
    A = np.zeros((G,) * lattice.dim)
    idx = tuple(lattice.modes[:, i] % G for i in range(lattice.dim))
    A[idx] = sig
    F = np.fft.fftn(A)
    T = np.real(np.fft.ifftn(F * F * np.conj(F)))[idx]
    d_lat = sig.sum()
    C = 2.0 * d_lat if C is None else C
    return 2.0 * T + (2.0 * d_lat - C) ** 2 * sig


def grad_moment_oracle(j, k, w, form="exact"):
    """``E_{mu_a} |D_{e_j} (:B:)_k|^2`` along the real direction ``e_j``.

    With independent complex modes the derivative is
    ``2 sum_r phi_{r+k-j} conj(phi_r) + sum_p phi_p phi_{k+j-p}`` (minus ``C`` on
    the diagonal), whose second moment is
    ``4 sum_{q-r=k-j} sigma_q sigma_r + 2 sum_{p+q=k+j} sigma_p sigma_q``.
    ``form="printed"`` evaluates the published expression, which treats
    ``conj(phi_l)`` as ``phi_{-l}``.
    """
    lattice = w.lattice
    sig, lookup = _sigma_lookup(lattice, w.a)
    ij, ik = lattice.position(j), lattice.position(k)
    jv, kv = lattice.modes[ij], lattice.modes[ik]
    d_lat = math.fsum(sig)
    if form == "exact":
        s1, s2 = [], []
        for iq, q in enumerate(lattice.modes):
            ir = lookup.get(tuple(int(c) for c in q - (kv - jv)))
            if ir is not None:
                s1.append(sig[iq] * sig[ir])
            ip = lookup.get(tuple(int(c) for c in kv + jv - q))
            if ip is not None:
                s2.append(sig[iq] * sig[ip])
        total = 4.0 * math.fsum(s1) + 2.0 * math.fsum(s2)
        if ij == ik:
            # the diagonal bilinear sum has mean 2 D; C = 2 D removes it
            total += (2.0 * d_lat - w.C) ** 2
        return total
    if form != "printed":
        raise ValueError(f"form must be 'exact' or 'printed', got {form!r}")
    neg = lattice.neg_index
    if ij == ik:
        return 8.0 * math.fsum(sig**2) + math.fsum(sig * sig[neg])
    terms = []
    diff = jv - kv
    for il, l in enumerate(lattice.modes):
        if np.array_equal(l, diff):
            continue
        iq = lookup.get(tuple(int(c) for c in l - diff))
        if iq is not None:
            terms.append(4.0 * sig[iq] * sig[il])
    if np.all(diff % 2 == 0):
        ih = lookup.get(tuple(int(c) for c in -diff // 2))
        if ih is not None:
            terms.append(2.0 * 2.0 * sig[ih] ** 2)
    for il, l in enumerate(lattice.modes):
        if np.array_equal(l, diff) or np.array_equal(2 * l, diff):
            continue
        iq = lookup.get(tuple(int(c) for c in l - diff))
        if iq is not None:
            terms.append(2.0 * sig[iq] * sig[neg[il]])
    return math.fsum(terms)


# --- Monte Carlo experiments -------------------------------------------------


def _gaussian_batches(lattice, samples, seed, a=2.0, batch=10_000):
    from .measures import GaussianSpec, sample_mu_a_array

    spec = GaussianSpec(lattice, a)
    rng = check_random_state(seed)
    done = 0
    while done < samples:
        n = min(batch, samples - done)
        yield sample_mu_a_array(spec, n, rng)
        done += n


def second_moment_mc(modes, w, samples, seed, batch=10_000):
    """Monte Carlo ``E|B_k - C phi_k|^2`` under ``mu_a``; returns ``(mean, stderr)`` arrays."""
    lattice = w.lattice
    idx = [lattice.position(k) for k in modes]
    vals = []
    for X in _gaussian_batches(lattice, samples, seed, w.a, batch):
        Y = cubic_fft(lattice, X) - w.C * X
        vals.append(np.abs(Y[:, idx]) ** 2)
    vals = np.concatenate(vals)
    return vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(vals.shape[0])


def grad_moment_mc(pairs, w, samples, seed, batch=10_000):
    """Monte Carlo ``E|D_{e_j} (:B:)_k|^2`` by an exact five-point stencil."""
    lattice = w.lattice
    vals = np.empty((samples, len(pairs)))
    start = 0
    for X in _gaussian_batches(lattice, samples, seed, w.a, batch):
        stop = start + X.shape[0]
        by_j = {}
        for c, (j, k) in enumerate(pairs):
            key = lattice.position(j)
            if key not in by_j:
                by_j[key] = directional_derivative(lattice, X, j, w)
            vals[start:stop, c] = np.abs(by_j[key][:, lattice.position(k)]) ** 2
        start = stop
    return vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(samples)


def _exact_hbeta_aggregate(lattice, beta, a=2.0, renormalized=True):
    m = _exact_second_moments_all(lattice, a, None if renormalized else 0.0)
    return math.fsum(sobolev_weights(lattice, beta) * m)


def uniform_bound_experiment(cutoffs, ns, samples, seed, *, dim=2, a=2.0, batch=10_000, exact=True):
    """``E ||:B:^N||^2_{H^beta}`` and ``E ||B^N||^2_{H^beta}`` for each cutoff.

    Returns rows ``(N, estimator, value, stderr, samples, beta, seed)``.  The
    Monte Carlo rows use the same draws for both estimators; ``exact=True``
    adds the closed-form values from the pairing sums.
    """
    if not isinstance(ns, NormSpec):
        ns = NormSpec(ns)
    rows = []
    for i, N in enumerate(cutoffs):
        lattice = build_lattice(dim, int(N))
        wick = WickSpec.for_lattice(lattice, a=a)
        weights = sobolev_weights(lattice, ns.beta)
        sub_seed = int(np.random.SeedSequence(int(seed), spawn_key=(i,)).generate_state(1)[0])
        ren, pln = [], []
        for X in _gaussian_batches(lattice, samples, sub_seed, a, batch):
            cubic = cubic_fft(lattice, X)
            ren.append(np.abs(cubic - wick.C * X) ** 2 @ weights)
            pln.append(np.abs(cubic) ** 2 @ weights)
        for name, v in (("renormalized_mc", ren), ("plain_mc", pln)):
            v = np.concatenate(v)
            rows.append(
                dict(N=int(N), estimator=name, value=float(v.mean()), stderr=float(v.std(ddof=1) / math.sqrt(v.size)),
                     samples=int(samples), beta=ns.beta, seed=int(seed))
            )
        if exact:
            for name, ren_flag in (("renormalized_exact", True), ("plain_exact", False)):
                rows.append(
                    dict(N=int(N), estimator=name, value=_exact_hbeta_aggregate(lattice, ns.beta, a, ren_flag),
                         stderr=0.0, samples=0, beta=ns.beta, seed=int(seed))
                )
    return rows


# --- appendix series -----------------------------------------------------------


def _ball(K, d):
    r = np.arange(-K, K + 1)
    pts = np.stack(np.meshgrid(*([r] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return pts[(pts**2).sum(axis=1) <= K * K]


def _series_s1(K, beta, d):
    # sum_{l,m} |l|^-2 |m|^-2 sum_k |k|^beta |l+m-k|^-2 over |l|,|m|,|k| <= K,
    # with l, m, k != 0 and k != l+m.  Both inner sums are convolutions.
    G = 8 * K + 4
    r = np.arange(-3 * K, 3 * K + 1)
    grids = np.meshgrid(*([r] * d), indexing="ij")
    n2 = sum(g.astype(float) ** 2 for g in grids)
    nz = n2 > 0
    inv = np.where(nz, 1.0 / np.where(nz, n2, 1.0), 0.0)
    kb = np.where(nz, np.where(nz, n2, 1.0) ** (beta / 2), 0.0)
    ball = n2 <= K * K
    pos = tuple(g % G for g in grids)

    def embed(values, mask):
        A = np.zeros((G,) * d)
        A[tuple(p[mask] for p in pos)] = values[mask]
        return np.fft.fftn(A)

    sig_ball = embed(inv, ball)
    lm = np.real(np.fft.ifftn(sig_ball * sig_ball))  # density of s = l + m
    inner = np.real(np.fft.ifftn(embed(kb, ball) * embed(inv, np.ones_like(ball))))  # sum_k |k|^b |s-k|^-2
    return math.fsum((lm * inner).ravel())


def _series_s2(K, beta, d):
    # sum_{k,m} |k|^beta / (|k-m|^4 |k-2m|^2) over |k|, |m| <= K, k != 0, m not in {k, k/2}
    pts = _ball(K, d)
    ks = pts[(pts**2).sum(axis=1) > 0]
    terms = []
    for k in ks:
        a = ((k - pts) ** 2).sum(axis=1).astype(float)
        b = ((k - 2 * pts) ** 2).sum(axis=1).astype(float)
        ok = (a > 0) & (b > 0)
        terms.append(float((k @ k) ** (beta / 2) * math.fsum(1.0 / (a[ok] ** 2 * b[ok]))))
    return math.fsum(terms)


def appendix_partial_sum(series_id, K, beta, d=2):
    """Partial sum of one of the two lattice series with every index in the ball ``|.| <= K``.

    ``S1``: ``sum |l|^-2 |m|^-2 sum_k |k|^beta / |l+m-k|^2``.
    ``S2``: ``sum |k|^beta / (|k-m|^4 |k-2m|^2)``.
    """
    if not (math.isfinite(beta) and beta < 0):
        raise ConfigError(f"beta must be < 0, got {beta!r}")
    if int(K) != K or K < 2:
        raise ConfigError(f"K must be an integer >= 2, got {K!r}")
    if d not in (1, 2):
        raise ConfigError(f"dimension must be 1 or 2, got {d!r}")
    if series_id == "S1":
        return _series_s1(int(K), float(beta), d)
    if series_id == "S2":
        return _series_s2(int(K), float(beta), d)
    raise ConfigError(f"series_id must be 'S1' or 'S2', got {series_id!r}")
