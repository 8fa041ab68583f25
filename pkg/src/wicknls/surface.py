"""Level-set conditioning, density ratios on mass level sets and invariance tests."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import kolmogorov
from sklearn.base import BaseEstimator, RegressorMixin

from ._validation import check_positive
from .conserved import MassSpec, mass_values, projection_factors, renormalized_mass_values
from .exceptions import ConfigError, InfeasibleLevelError, SampleSizeError, UndefinedSurfaceError
from .measures import a_n_constant, wick_quartic_values
from .spectral import sobolev_weights

MIN_KS_SAMPLES = 50


@dataclass(frozen=True)
class LevelSetSpec:
    """Target level ``r`` of the renormalized mass, shell half-width and KDE bandwidth."""

    r: float
    delta: float
    bandwidth: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.r):
            raise ConfigError(f"r must be finite, got {self.r!r}")
        check_positive(self.delta, "delta")
        if self.bandwidth is not None:
            check_positive(self.bandwidth, "bandwidth")

    def check_feasible(self, ms):
        if not self.r + ms.total_Z > 0:
            raise ConfigError(f"level r={self.r} is infeasible: r + total_Z = {self.r + ms.total_Z} <= 0")


@dataclass(frozen=True)
class StatTestResult:
    statistic: float
    p_value: float
    n1: int
    n2: int
    label: str = ""

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value must lie in [0, 1], got {self.p_value}")


# --- conditioning ---------------------------------------------------------------


def condition_on_level(e, spec, ms=None, *, project=True):
    """Members with ``|E(phi) - r| < delta``, optionally rescaled onto ``V_r``.

    ``meta["acceptance_fraction"]`` records the retained share.
    """
    ms = ms or MassSpec.for_lattice(e.lattice)
    spec.check_feasible(ms)
    E = renormalized_mass_values(e.coeffs, ms)
    keep = np.abs(E - spec.r) < spec.delta
    if not keep.any():
        gap = float(np.min(np.abs(E - spec.r))) if E.size else float("inf")
        raise InfeasibleLevelError(
            f"no member within delta={spec.delta} of r={spec.r} (closest at distance {gap:.4g})",
            suggested_delta=2.0 * gap,
        )
    out = e.subset(np.flatnonzero(keep), provenance="conditional")
    if project:
        out = out.with_coeffs(out.coeffs * projection_factors(out.coeffs, spec.r, ms)[:, None])
    out.meta.update(acceptance_fraction=float(keep.mean()), level=spec.r, delta=spec.delta, projected=project,
                    base_provenance=e.provenance)
    return out


# --- densities and ratios ----------------------------------------------------------


def silverman_bandwidth(values, weights=None):
    """Silverman's rule ``0.9 min(sd, IQR/1.34) n_eff^{-1/5}``."""
    x = np.asarray(values, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    n_eff = 1.0 / np.sum(w**2)
    mean = np.sum(w * x)
    sd = math.sqrt(np.sum(w * (x - mean) ** 2))
    order = np.argsort(x)
    cum = np.cumsum(w[order])
    q1, q3 = np.interp([0.25, 0.75], cum, x[order])
    spread = min(sd, (q3 - q1) / 1.34) if q3 > q1 else sd
    if not spread > 0:
        raise ValueError("cannot choose a bandwidth for constant data")
    return 0.9 * spread * n_eff ** (-0.2)


def _kernel(values, r, h):
    z = (np.asarray(values, dtype=float)[None, :] - np.atleast_1d(r)[:, None]) / h
    return np.exp(-0.5 * z * z) / (h * math.sqrt(2.0 * math.pi))


def density_rho(values, weights=None, r=0.0, bandwidth=None):
    """Weighted Gaussian-kernel density estimate at ``r`` (scalar or array)."""
    x = np.asarray(values, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    h = silverman_bandwidth(x, w) if bandwidth is None else check_positive(bandwidth, "bandwidth")
    out = _kernel(x, r, h) @ (w / w.sum())
    return float(out[0]) if np.ndim(r) == 0 else out


class SurfaceRatioEstimator(RegressorMixin, BaseEstimator):
    """Kernel ratio ``rho_g(r) / rho(r)``: the mean of ``g`` on the level ``E = r``.

    ``fit(E, g)`` stores the samples; ``predict(r)`` evaluates the ratio of
    the ``g``-weighted to the plain density estimate.
    """

    def __init__(self, bandwidth=None, min_density=1e-12):
        self.bandwidth = bandwidth
        self.min_density = min_density

    def fit(self, X, y, sample_weight=None):
        x = np.asarray(X, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if x.shape != y.shape:
            raise ValueError("X and y must have the same length")
        w = np.ones_like(x) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        self.values_, self.targets_, self.weights_ = x, y, w / w.sum()
        self.bandwidth_ = silverman_bandwidth(x, w) if self.bandwidth is None else float(self.bandwidth)
        return self

    def _parts(self, r):
        K = _kernel(self.values_, r, self.bandwidth_) * self.weights_
        rho = K.sum(axis=1)
        if np.any(rho <= self.min_density):
            raise UndefinedSurfaceError(f"density estimate vanishes at r={r}")
        return K, rho

    def predict(self, X):
        K, rho = self._parts(np.asarray(X, dtype=float).reshape(-1))
        # centred on one target so that a constant observable is returned exactly
        c = self.targets_[0]
        return c + (K @ (self.targets_ - c)) / rho

    def predict_se(self, X):
        """Delta-method standard error of the ratio."""
        r = np.asarray(X, dtype=float).reshape(-1)
        K, rho = self._parts(r)
        m = (K @ self.targets_) / rho
        resid = self.targets_[None, :] - m[:, None]
        return np.sqrt(np.sum(K**2 * resid**2, axis=1)) / rho


@dataclass
class SurfaceEstimate:
    ratio: float
    ratio_se: float
    conditional: float
    conditional_se: float
    n_shell: int
    bandwidth: float

    @property
    def joint_se(self):
        return math.hypot(self.ratio_se, self.conditional_se)

    def agree(self, n_se=4.0):
        return abs(self.ratio - self.conditional) <= n_se * self.joint_se


def surface_expectation(g, spec, e, ms=None):
    """Mean of ``g`` on ``{E = r}`` by the kernel ratio and by the shell average.

    ``g`` maps a coefficient array ``(n, n_modes)`` to ``n`` values.
    """
    ms = ms or MassSpec.for_lattice(e.lattice)
    E = renormalized_mass_values(e.coeffs, ms)
    gv = np.asarray(g(e.coeffs), dtype=float)
    w = e.weights
    est = SurfaceRatioEstimator(spec.bandwidth).fit(E, gv, w)
    ratio, ratio_se = float(est.predict([spec.r])[0]), float(est.predict_se([spec.r])[0])
    shell = np.abs(E - spec.r) < spec.delta
    if shell.sum() < 2:
        raise UndefinedSurfaceError(f"fewer than two members in the shell |E - {spec.r}| < {spec.delta}")
    ws = w[shell] / w[shell].sum()
    cond = float(gv[shell][0] + ws @ (gv[shell] - gv[shell][0]))
    cond_se = float(math.sqrt(np.sum(ws**2 * (gv[shell] - cond) ** 2)))
    return SurfaceEstimate(ratio, ratio_se, cond, cond_se, int(shell.sum()), est.bandwidth_)


def delta_refinement(g, e, r, deltas=(0.4, 0.2, 0.1), ms=None, n_se=4.0):
    """Shell means of ``g`` for shrinking ``delta``; successive means must agree within ``n_se`` joint SE."""
    ms = ms or MassSpec.for_lattice(e.lattice)
    E = renormalized_mass_values(e.coeffs, ms)
    gv = np.asarray(g(e.coeffs), dtype=float)
    rows = []
    for d in deltas:
        sel = np.abs(E - r) < d
        if sel.sum() < 2:
            raise InfeasibleLevelError(f"shell of half-width {d} holds fewer than two members", suggested_delta=2 * d)
        rows.append(dict(delta=float(d), mean=float(gv[sel].mean()), se=float(gv[sel].std(ddof=1) / math.sqrt(sel.sum())),
                         n=int(sel.sum())))
    steps = []
    for a, b in zip(rows, rows[1:]):
        # nested shells: the inner sample is a subset, so the difference has
        # variance se_b^2 - se_a^2 at most; the sum is a conservative bound
        diff = abs(a["mean"] - b["mean"])
        se = math.hypot(a["se"], b["se"])
        steps.append(dict(deltas=(a["delta"], b["delta"]), diff=diff, se=se, ok=diff <= n_se * se))
    return {"levels": rows, "steps": steps, "passed": all(s["ok"] for s in steps)}


# --- two-sample testing ----------------------------------------------------------


def ks_two_sample(xs, ys, label=""):
    """Two-sample Kolmogorov-Smirnov statistic with the asymptotic p-value."""
    x = np.sort(np.asarray(xs, dtype=float))
    y = np.sort(np.asarray(ys, dtype=float))
    n1, n2 = x.size, y.size
    if min(n1, n2) < MIN_KS_SAMPLES:
        raise SampleSizeError(f"KS test needs at least {MIN_KS_SAMPLES} samples per side, got {n1} and {n2}")
    pts = np.concatenate([x, y])
    cdf1 = np.searchsorted(x, pts, side="right") / n1
    cdf2 = np.searchsorted(y, pts, side="right") / n2
    D = float(np.max(np.abs(cdf1 - cdf2)))
    en = math.sqrt(n1 * n2 / (n1 + n2))
    p = float(np.clip(kolmogorov(en * D), 0.0, 1.0))
    return StatTestResult(D, p, n1, n2, label)


def lowest_modes(lattice, count=6):
    """Indices of the ``count`` smallest ``|k|^2`` (lexicographic tie-break)."""
    return np.argsort(lattice.k2, kind="stable")[:count]


def observable_panel(lattice, coeffs, beta=-0.5, aN=None, n_modes=6):
    """Re, Im and ``|phi_k|^2`` of the lowest modes, the ``H^beta`` norm and the Wick quartic."""
    coeffs = np.asarray(coeffs)
    aN = a_n_constant(lattice) if aN is None else aN
    panel = {}
    for i in lowest_modes(lattice, n_modes):
        k = ",".join(str(int(c)) for c in lattice.modes[i])
        panel[f"re[{k}]"] = coeffs[:, i].real
        panel[f"im[{k}]"] = coeffs[:, i].imag
        panel[f"abs2[{k}]"] = np.abs(coeffs[:, i]) ** 2
    panel["h_beta_norm_sq"] = np.abs(coeffs) ** 2 @ sobolev_weights(lattice, beta)
    panel["wick_quartic"] = wick_quartic_values(lattice, coeffs, aN)
    return panel


@dataclass
class SuiteReport:
    tests: list
    alpha: float
    threshold: float
    n_pre: int
    n_post: int
    drift: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def rejections(self):
        return [t.label for t in self.tests if t.p_value < self.threshold]

    @property
    def passed(self):
        """No Bonferroni-corrected rejection."""
        return not self.rejections

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "bonferroni_threshold": self.threshold,
            "n_pre": self.n_pre,
            "n_post": self.n_post,
            "observables": {t.label: {"statistic": t.statistic, "p": t.p_value, "pass": t.p_value >= self.threshold}
                            for t in self.tests},
            "passed": self.passed,
            "drift": self.drift,
            **self.info,
        }


def invariance_test(e, flow_cfg, *, alpha=0.01, beta=-0.5, paired=False, threads=1):
    """Evolve members of ``e`` and compare observable marginals before and after.

    With ``paired=False`` (default) even members form the reference sample and
    odd members are evolved, so the two KS samples are independent.
    ``paired=True`` evolves every member and compares with itself.
    """
    from .flow import evolve_parallel

    X = e.coeffs
    if paired:
        pre, start = X, X
    else:
        pre, start = X[0::2], X[1::2]
    post, report = evolve_parallel(start, flow_cfg, threads)
    aN = a_n_constant(e.lattice)
    p_pre = observable_panel(e.lattice, pre, beta, aN)
    p_post = observable_panel(e.lattice, post, beta, aN)
    tests = [ks_two_sample(p_pre[k], p_post[k], k) for k in p_pre]
    info = {"provenance": e.provenance, "T": flow_cfg.T, "members": len(e)}
    for key in ("acceptance_fraction", "min_stage_ess", "ess", "level"):
        if key in e.meta:
            info[key] = e.meta[key]
    if flow_cfg.project_each_step:
        ms = flow_cfg.mass_spec or MassSpec.for_lattice(e.lattice)
        info["max_level_error"] = float(np.max(np.abs(mass_values(post) - ms.total_Z - flow_cfg.level)))
    return SuiteReport(tests, alpha, alpha / len(tests), len(pre), len(post), report.summary(), info)


def invariance_suite(gibbs_ensemble, flow_cfg, level_spec=None, *, alpha=0.01, beta=-0.5, negative_control=None,
                     threads=1, unconditioned=True):
    """Gibbs invariance, conditional (level-set) invariance and the negative control.

    Returns a dict of :class:`SuiteReport` keyed by ``"gibbs"`` (unless
    ``unconditioned=False``), ``"conditional"`` and ``"negative_control"``
    (the latter two when requested).  The conditional run projects onto ``V_r`` at every step.
    """
    from dataclasses import replace

    out = {}
    if unconditioned:
        out["gibbs"] = invariance_test(gibbs_ensemble, flow_cfg, alpha=alpha, beta=beta, threads=threads)
    if level_spec is not None:
        ms = flow_cfg.mass_spec or MassSpec.for_lattice(gibbs_ensemble.lattice)
        cond = condition_on_level(gibbs_ensemble, level_spec, ms, project=True)
        cfg = replace(flow_cfg, project_each_step=True, level=level_spec.r, mass_spec=ms)
        out["conditional"] = invariance_test(cond, cfg, alpha=alpha, beta=beta, threads=threads)
    if negative_control is not None:
        out["negative_control"] = invariance_test(negative_control, flow_cfg, alpha=alpha, beta=beta,
                                                  threads=threads)
    return out


def report_dict(reports):
    return {name: rep.to_dict() for name, rep in reports.items()}


__all__ = [
    "LevelSetSpec",
    "StatTestResult",
    "SurfaceEstimate",
    "SurfaceRatioEstimator",
    "SuiteReport",
    "condition_on_level",
    "delta_refinement",
    "density_rho",
    "invariance_suite",
    "invariance_test",
    "ks_two_sample",
    "observable_panel",
    "silverman_bandwidth",
    "surface_expectation",
]
