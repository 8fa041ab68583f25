"""Time integration of the truncated (Wick-ordered) cubic NLS.

The Galerkin system is ``d phi_k / dt = -i (kappa |k|^2 phi_k + B_k(phi) - C phi_k)``
with ``C`` the counterterm of a :class:`~wicknls.nonlinearity.WickSpec`
(``C = 0`` for the plain flow).  It is Hamiltonian for
``kappa sum |k|^2 |phi_k|^2 + 1/2 int |u|^4 - C sum |phi_k|^2`` and conserves
the plain mass exactly.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_coeffs, check_is_fitted, check_positive
from .conserved import MassSpec, hamiltonian_values, mass_values, projection_factors
from .exceptions import BlowUpError, ConfigError
from .nonlinearity import WickSpec, cubic_fft
from .spectral import SpectralField, analyze, build_lattice, min_grid_size, resolve_dispersion, synthesize

INTEGRATORS = ("lawson_rk4", "strang")
STRANG_SUBSTEPS = ("rk4", "pointwise")


@dataclass(frozen=True)
class FlowConfig:
    """Integrator settings.

    ``T`` may be negative.  When ``|T| / dt`` is not an integer the last step
    is shortened and flagged in the report.  ``gauge_shift`` moves the
    conserved-mass part ``2 M_0 phi`` of the cubic term into the exact linear
    propagator of the Lawson scheme; the trajectory is the same, only the
    truncation error changes.
    """

    dt: float
    T: float
    wick: WickSpec
    integrator: str = "lawson_rk4"
    dispersion: object = "integer"
    drift_tolerance: float = 1e-9
    project_each_step: bool = False
    level: float | None = None
    mass_spec: MassSpec | None = None
    gauge_shift: bool = True
    grid_size: int | None = None
    n_checkpoints: int = 10
    strang_substep: str = "rk4"

    def __post_init__(self):
        check_positive(self.dt, "dt")
        if not math.isfinite(self.T):
            raise ConfigError(f"T must be finite, got {self.T!r}")
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        resolve_dispersion(self.dispersion)
        check_positive(self.drift_tolerance, "drift_tolerance")
        check_positive(self.n_checkpoints, "n_checkpoints", integer=True)
        if self.strang_substep not in STRANG_SUBSTEPS:
            raise ConfigError(f"strang_substep must be one of {STRANG_SUBSTEPS}, got {self.strang_substep!r}")
        if self.project_each_step and self.level is None:
            raise ConfigError("project_each_step requires a target level")
        if self.grid_size is not None and self.grid_size < min_grid_size(self.wick.lattice, 3):
            raise ConfigError(f"grid_size must be >= {min_grid_size(self.wick.lattice, 3)}")

    @property
    def kappa(self):
        return resolve_dispersion(self.dispersion)

    @property
    def steps(self):
        """Step sizes (all ``dt`` except possibly a shorter last one)."""
        n_full = int(math.floor(abs(self.T) / self.dt + 1e-9))
        rest = abs(self.T) - n_full * self.dt
        sizes = [self.dt] * n_full
        if rest > 1e-12 * max(1.0, abs(self.T)):
            sizes.append(rest)
        return sizes


@dataclass
class DriftReport:
    """Conserved quantities at the checkpoints; drifts are maxima over checkpoints and members."""

    times: np.ndarray
    mass: np.ndarray
    renormalized_mass: np.ndarray
    hamiltonian: np.ndarray
    partial_last_step: bool = False
    projected: bool = False
    tolerance: float = 1e-9
    extra: dict = field(default_factory=dict)

    @staticmethod
    def _rel(values):
        v = np.asarray(values, dtype=float)
        ref = np.abs(v[0])
        ref = np.where(ref > 0, ref, 1.0)
        return float(np.max(np.abs(v - v[0]) / ref)) if v.size else 0.0

    @property
    def max_mass_drift(self):
        return self._rel(self.mass)

    @property
    def max_renormalized_mass_drift(self):
        """Absolute drift of ``E`` divided by the plain-mass scale."""
        v = np.asarray(self.renormalized_mass)
        scale = np.maximum(np.abs(np.asarray(self.mass)[0]), 1e-300)
        return float(np.max(np.abs(v - v[0]) / scale)) if v.size else 0.0

    @property
    def max_hamiltonian_drift(self):
        return self._rel(self.hamiltonian)

    @property
    def flagged(self):
        """Drift exceeded the tolerance and was not corrected."""
        return (not self.projected) and self.max_mass_drift > self.tolerance

    def summary(self):
        return {
            "checkpoints": int(len(self.times)),
            "max_mass_drift": self.max_mass_drift,
            "max_renormalized_mass_drift": self.max_renormalized_mass_drift,
            "max_hamiltonian_drift": self.max_hamiltonian_drift,
            "partial_last_step": self.partial_last_step,
            "flagged": self.flagged,
        }

    def to_csv(self, path, config_hash=None):
        """One row per checkpoint; member columns are averaged for ensembles."""
        with open(path, "w", newline="") as fh:
            if config_hash is not None:
                fh.write(f"# config_hash={config_hash}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "mass", "renormalized_mass", "hamiltonian"])
            for t, m, e, h in zip(self.times, self.mass, self.renormalized_mass, self.hamiltonian):
                w.writerow([repr(float(t)), repr(float(np.mean(m))), repr(float(np.mean(e))), repr(float(np.mean(h)))])


# --- single steps ------------------------------------------------------------


def _lawson_array(c, h, omega, nonlinear):
    """RK4 on the twisted variable; ``omega`` is the exact linear frequency."""
    # e1 uses the same rounding as spectral.phase_factors, so a step with no
    # nonlinearity reproduces linear_phase bit for bit
    eh = np.exp(-1j * (omega * (0.5 * h)))
    e1 = np.exp(-1j * (omega * h))
    k1 = nonlinear(c)
    k2 = nonlinear(eh * (c + 0.5 * h * k1))
    k3 = nonlinear(eh * c + 0.5 * h * k2)
    k4 = nonlinear(e1 * c + h * eh * k3)
    return e1 * c + (h / 6.0) * (e1 * k1 + 2.0 * eh * (k2 + k3) + k4)


def lawson_rk4_step(f, dt, vector_field, dispersion="integer", shift=0.0):
    """One Lawson RK4 step for ``dphi/dt = -i (kappa |k|^2 phi + N(phi))``.

    ``vector_field`` maps a coefficient array to ``N(phi)`` (for example
    ``B - C phi``).  ``shift`` is a real constant moved from ``N`` into the
    exact linear part; with ``vector_field = 0`` and ``shift = 0`` the step is
    exactly :func:`~wicknls.spectral.linear_phase`.
    """
    kappa = resolve_dispersion(dispersion)
    omega = kappa * f.lattice.k2 + shift

    def nonlinear(c):
        return -1j * (vector_field(c) - shift * c)

    return SpectralField(f.lattice, _lawson_array(np.asarray(f.coeffs), dt, omega, nonlinear))


def _strang_array(lattice, c, h, kappa, C, G, substep="rk4"):
    half = np.exp(-0.5j * h * kappa * lattice.k2)
    c = half * c
    if substep == "pointwise":
        u = synthesize(lattice, c, G)
        u = np.exp(-1j * h * (u.real**2 + u.imag**2 - C)) * u
        c = analyze(lattice, u, G)
    else:
        # the truncated nonlinear subflow d phi/dt = -i (B - C phi), one Lawson
        # RK4 step with the conserved-mass phase 2 M - C treated exactly
        shift = 2.0 * mass_values(c)[..., None] - C

        def nonlinear(z):
            return -1j * (cubic_fft(lattice, z, G) - (shift + C) * z)

        c = _lawson_array(c, h, shift, nonlinear)
    return half * c


def strang_step(f, dt, wick, dispersion="integer", G=None, substep="rk4"):
    """Half linear step, nonlinear step, half linear step.

    ``substep="pointwise"`` is the grid phase rotation
    ``u -> exp(-i(|u|^2 - C) dt) u`` followed by re-truncation.  That map is
    the nonlinear flow of the untruncated equation, so the splitting is only
    first order for the Galerkin system.  The default ``"rk4"`` integrates
    the truncated nonlinear subflow to fifth-order local accuracy, which
    restores second order.
    """
    if substep not in STRANG_SUBSTEPS:
        raise ConfigError(f"substep must be one of {STRANG_SUBSTEPS}, got {substep!r}")
    G = min_grid_size(f.lattice, 3) if G is None else int(G)
    kappa = resolve_dispersion(dispersion)
    out = _strang_array(f.lattice, np.asarray(f.coeffs), dt, kappa, wick.C, G, substep)
    return SpectralField(f.lattice, out)


# --- trajectories ----------------------------------------------------------------


def evolve_array(X, cfg, callback=None):
    """Evolve every row of ``X`` to ``cfg.T``; returns ``(X_T, DriftReport)``.

    Negative times integrate the conjugated system forward:
    ``phi(-T) = conj(Phi_T(conj(phi_0)))``.
    """
    lattice = cfg.wick.lattice
    X = check_coeffs(X, lattice.n_modes)
    backward = cfg.T < 0
    c = np.conj(X) if backward else X.copy()
    kappa, C = cfg.kappa, cfg.wick.C
    G = min_grid_size(lattice, 3) if cfg.grid_size is None else cfg.grid_size
    aN = C / 2.0
    ms = cfg.mass_spec or MassSpec.for_lattice(lattice)
    steps = cfg.steps
    sign = -1.0 if backward else 1.0

    if cfg.integrator == "lawson_rk4":
        shift = (2.0 * mass_values(c) - C)[:, None] if cfg.gauge_shift else np.full((c.shape[0], 1), -C)
        omega = kappa * lattice.k2[None, :] + shift

        def nonlinear(z):
            return -1j * (cubic_fft(lattice, z, G) - (shift + C) * z)

        def step(z, h):
            return _lawson_array(z, h, omega, nonlinear)

    else:

        def step(z, h):
            return _strang_array(lattice, z, h, kappa, C, G, cfg.strang_substep)

    n = len(steps)
    marks = {int(round(j * n / cfg.n_checkpoints)) for j in range(cfg.n_checkpoints + 1)} if n else {0}
    times, masses, emass, ham = [], [], [], []

    def record(i, t, z):
        state = np.conj(z) if backward else z
        times.append(sign * t)
        masses.append(mass_values(state))
        emass.append(mass_values(state) - ms.total_Z)
        ham.append(hamiltonian_values(lattice, state, aN, G, kappa))
        if callback is not None:
            callback(sign * t, state)

    t = 0.0
    record(0, t, c)
    for i, h in enumerate(steps, start=1):
        c = step(c, h)
        if cfg.project_each_step:
            c = c * projection_factors(c, cfg.level, ms)[:, None]
        t += h
        if not np.all(np.isfinite(c)):
            raise BlowUpError(f"non-finite state after step {i}", last_valid_time=sign * (t - h))
        if i in marks:
            record(i, t, c)
    out = np.conj(c) if backward else c
    report = DriftReport(
        np.array(times),
        np.array(masses),
        np.array(emass),
        np.array(ham),
        partial_last_step=bool(steps) and steps[-1] != cfg.dt,
        projected=cfg.project_each_step,
        tolerance=cfg.drift_tolerance,
        extra={"steps": n, "grid_size": G, "dispersion": kappa, "counterterm": C},
    )
    return out, report


def evolve_parallel(X, cfg, threads=1):
    """:func:`evolve_array` over row chunks in a thread pool.

    Rows are independent, so the result does not depend on ``threads``;
    chunks are merged in row order.
    """
    X = np.asarray(X)
    threads = max(1, int(threads))
    if threads == 1 or X.shape[0] < 2 * threads:
        return evolve_array(X, cfg)
    chunks = np.array_split(np.arange(X.shape[0]), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda idx: evolve_array(X[idx], cfg), chunks))
    out = np.concatenate([p[0] for p in parts])
    first = parts[0][1]
    report = DriftReport(
        first.times,
        np.concatenate([p[1].mass for p in parts], axis=1),
        np.concatenate([p[1].renormalized_mass for p in parts], axis=1),
        np.concatenate([p[1].hamiltonian for p in parts], axis=1),
        first.partial_last_step,
        first.projected,
        first.tolerance,
        dict(first.extra, threads=threads),
    )
    return out, report


def evolve(f0, cfg, callback=None):
    """Evolve one field to time ``cfg.T``; returns ``(field, DriftReport)``."""
    if f0.lattice != cfg.wick.lattice:
        raise ValueError("initial field and flow config live on different lattices")
    out, report = evolve_array(f0.coeffs, cfg, callback)
    return SpectralField(f0.lattice, out[0]), report


class NLSFlow(TransformerMixin, BaseEstimator):
    """Transformer mapping coefficient rows to their state at time ``T``.

    The drift report of the most recent :meth:`transform` call is kept in
    ``drift_report_``.
    """

    def __init__(self, dim=2, n_cut=8, T=1.0, dt=1e-3, integrator="lawson_rk4", renormalize=None,
                 dispersion="integer", level=None, project_each_step=False):
        self.dim = dim
        self.n_cut = n_cut
        self.T = T
        self.dt = dt
        self.integrator = integrator
        self.renormalize = renormalize
        self.dispersion = dispersion
        self.level = level
        self.project_each_step = project_each_step

    def fit(self, X=None, y=None):
        self.lattice_ = build_lattice(self.dim, self.n_cut)
        renorm = (self.dim == 2) if self.renormalize is None else bool(self.renormalize)
        wick = WickSpec.for_lattice(self.lattice_) if renorm else WickSpec.plain(self.lattice_)
        self.config_ = FlowConfig(
            dt=self.dt, T=self.T, wick=wick, integrator=self.integrator, dispersion=self.dispersion,
            level=self.level, project_each_step=self.project_each_step,
        )
        self.n_features_in_ = self.lattice_.n_modes
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        out, self.drift_report_ = evolve_array(X, self.config_)
        return out
