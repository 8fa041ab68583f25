"""Experiment configuration: strict INI parsing, defaults and content hashing."""
from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass

from .exceptions import ConfigError
from .spectral import DISPERSION

# section -> key -> (type, default, help)
SCHEMA = {
    "lattice": {
        "dimension": ("int", 2, "torus dimension, 1 or 2"),
        "n_cut": ("int", 8, "cutoff on |k|^2"),
    },
    "measure": {
        "a": ("float", 2.0, "covariance exponent of mu_a"),
        "beta": ("float", -0.5, "Sobolev exponent of H^beta (< 0)"),
        "wick_cutoff": ("float?", None, "counterterm sums over |k|^2 <= wick_cutoff (default: whole lattice)"),
        "renormalize": ("str", "auto", "auto (Wick in d=2, plain in d=1), yes or no"),
    },
    "sampling": {
        "samples": ("int", 100000, "Monte Carlo draws for moment experiments"),
        "members": ("int", 10000, "ensemble size for sample / invariance runs"),
        "kind": ("str", "mu_a", "ensemble kind for `sample`: mu_a or gibbs"),
        "batch": ("int", 10000, "draws per vectorised batch"),
        "moment_max_k2": ("int", 5, "`moments` checks every mode with |k|^2 <= this"),
        "modes": ("modes", "1,0; 1,1; 2,0", "modes for `second-moment` (semicolon separated)"),
        "cutoffs": ("intlist", "4, 8, 16, 32", "cutoffs for `wick-bound`"),
    },
    "flow": {
        "dt": ("float", 1e-3, "time step"),
        "T": ("float", 1.0, "final time (may be negative)"),
        "integrator": ("str", "lawson_rk4", "lawson_rk4 or strang"),
        "angular_convention": ("str", "integer", f"dispersion preset {sorted(DISPERSION)} or a positive number"),
        "drift_tolerance": ("float", 1e-9, "mass drift above this is flagged"),
        "project_each_step": ("bool", False, "rescale onto the level set after every step"),
        "strang_substep": ("str", "rk4", "rk4 or pointwise"),
        "initial": ("str", "mu_a", "initial data for `evolve`: mu_a or gibbs"),
        "trajectories": ("int", 4, "number of trajectories for `evolve`"),
    },
    "level": {
        "r": ("float?", None, "target renormalized mass (default: mode of the E density)"),
        "delta": ("float", 0.4, "shell half-width"),
        "bandwidth": ("float?", None, "KDE bandwidth (default: Silverman)"),
        "refine": ("floatlist", "0.4, 0.2, 0.1", "shell widths of the refinement study"),
    },
    "invariance": {
        "alpha": ("float", 0.01, "family-wise level (Bonferroni over the panel)"),
        "dispersion": ("str", "gibbs", "dispersion for invariance runs (gibbs matches mu_2)"),
        "negative_control": ("bool", True, "also run the unweighted mu_2 control"),
    },
    "series": {
        "K": ("intlist", "8, 16, 32, 64", "ball radii"),
        "beta": ("float", -0.5, "exponent of |k|^beta"),
        "dimension": ("int", 2, "lattice dimension of the series"),
    },
    "run": {
        "seed": ("int", 20240501, "master seed"),
        "out": ("str", "out", "output directory"),
    },
}


def _parse_value(kind, raw, where):
    raw = raw.strip()
    try:
        if kind.endswith("?"):
            if raw.lower() in ("", "none", "auto"):
                return None
            kind = kind[:-1]
        if kind == "int":
            return int(raw)
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError("expected a boolean")
        if kind == "str":
            return raw
        if kind == "intlist":
            return [int(x) for x in raw.replace(",", " ").split()]
        if kind == "floatlist":
            return [float(x) for x in raw.replace(",", " ").split()]
        if kind == "modes":
            return [tuple(int(c) for c in part.split(",")) for part in raw.split(";") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind} ({exc})") from None
    raise AssertionError(kind)


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        if value and isinstance(value[0], tuple):
            return "; ".join(",".join(str(c) for c in m) for m in value)
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    return str(value)


def defaults():
    return {
        sec: {key: (_parse_value(kind, str(d), f"[{sec}] {key}") if isinstance(d, str) and kind not in ("str",) else d)
              for key, (kind, d, _) in keys.items()}
        for sec, keys in SCHEMA.items()
    }


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully populated configuration (``values[section][key]``)."""

    values: dict

    def __getitem__(self, section):
        return self.values[section]

    def to_ini(self):
        lines = []
        for sec, keys in self.values.items():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {_format_value(v)}" for k, v in keys.items()]
            lines.append("")
        return "\n".join(lines)

    @property
    def hash(self):
        """First 16 hex digits of the SHA-256 of the canonical JSON form."""
        canon = json.dumps(self.values, sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_overrides(self, seed=None, out=None):
        vals = json.loads(json.dumps(self.values, default=list))
        vals["sampling"]["modes"] = [tuple(m) for m in vals["sampling"]["modes"]]
        if seed is not None:
            vals["run"]["seed"] = int(seed)
        if out is not None:
            vals["run"]["out"] = str(out)
        return validate(vals)


def validate(values):
    lat, meas, flow, level, samp = (values[s] for s in ("lattice", "measure", "flow", "level", "sampling"))
    if lat["dimension"] not in (1, 2):
        raise ConfigError(f"[lattice] dimension must be 1 or 2, got {lat['dimension']}")
    if lat["n_cut"] < 1:
        raise ConfigError(f"[lattice] n_cut must be >= 1, got {lat['n_cut']}")
    if not meas["a"] > 0:
        raise ConfigError(f"[measure] a must be > 0, got {meas['a']}")
    for sec in ("measure", "series"):
        if not values[sec]["beta"] < 0:
            raise ConfigError(f"[{sec}] beta must be < 0 (H^beta with negative exponent), got {values[sec]['beta']}")
    if meas["renormalize"] not in ("auto", "yes", "no"):
        raise ConfigError(f"[measure] renormalize must be auto, yes or no, got {meas['renormalize']!r}")
    if not flow["dt"] > 0:
        raise ConfigError(f"[flow] dt must be > 0, got {flow['dt']}")
    if flow["integrator"] not in ("lawson_rk4", "strang"):
        raise ConfigError(f"[flow] integrator must be lawson_rk4 or strang, got {flow['integrator']!r}")
    if flow["strang_substep"] not in ("rk4", "pointwise"):
        raise ConfigError(f"[flow] strang_substep must be rk4 or pointwise, got {flow['strang_substep']!r}")
    if flow["initial"] not in ("mu_a", "gibbs") or samp["kind"] not in ("mu_a", "gibbs"):
        raise ConfigError("initial / kind must be mu_a or gibbs")
    for sec, key in (("flow", "angular_convention"), ("invariance", "dispersion")):
        v = values[sec][key]
        if v not in DISPERSION:
            try:
                if not float(v) > 0:
                    raise ValueError
            except ValueError:
                raise ConfigError(f"[{sec}] {key} must be one of {sorted(DISPERSION)} or a positive number") from None
    if not level["delta"] > 0 or any(d <= 0 for d in level["refine"]):
        raise ConfigError("[level] delta and refine widths must be > 0")
    if level["bandwidth"] is not None and not level["bandwidth"] > 0:
        raise ConfigError("[level] bandwidth must be > 0")
    for key in ("samples", "members", "batch", "trajectories"):
        sec = "flow" if key == "trajectories" else "sampling"
        if values[sec][key] < 1:
            raise ConfigError(f"[{sec}] {key} must be >= 1")
    if not 0 < values["invariance"]["alpha"] < 1:
        raise ConfigError("[invariance] alpha must lie in (0, 1)")
    if any(k < 2 for k in values["series"]["K"]):
        raise ConfigError("[series] K values must be >= 2")
    if values["series"]["dimension"] not in (1, 2):
        raise ConfigError("[series] dimension must be 1 or 2")
    return ExperimentConfig(values)


def parse_config_text(text, source="<string>"):
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: syntax error: {exc}") from None
    values = defaults()
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{sec}]")
            values[sec][key] = _parse_value(SCHEMA[sec][key][0], raw, f"[{sec}] {key}")
    return validate(values)


def parse_config(path):
    """Read and validate an INI experiment file; unknown sections or keys are errors."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, str(path))


def describe_defaults():
    lines = ["configuration keys (INI sections) and defaults:"]
    for sec, keys in SCHEMA.items():
        lines.append(f"  [{sec}]")
        for key, (_, d, help_) in keys.items():
            lines.append(f"    {key} = {_format_value(d) if not isinstance(d, str) else d}  ; {help_}")
    return "\n".join(lines)
