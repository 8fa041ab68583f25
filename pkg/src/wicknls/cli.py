"""Command-line harness: ``wicknls <subcommand> --config FILE``.

Exit codes: 0 every criterion passed, 1 an acceptance criterion failed,
2 configuration or usage error, 3 runtime or numerical error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import experiments as ex
from .config import describe_defaults, parse_config, parse_config_text
from .exceptions import ConfigError, WickNLSError
from .flow import FlowConfig, evolve_parallel
from .gibbs import sample_gibbs
from .io import staged_output, write_csv, write_field_records, write_json, write_metadata
from .measures import GaussianSpec, sample_ensemble
from .nonlinearity import WickSpec
from .spectral import SpectralField, build_lattice
from .surface import report_dict

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
log = logging.getLogger("wicknls")


def _wick(cfg, lattice):
    mode = cfg["measure"]["renormalize"]
    renorm = lattice.dim == 2 if mode == "auto" else mode == "yes"
    if not renorm:
        return WickSpec.plain(lattice, cfg["measure"]["a"])
    return WickSpec.for_lattice(lattice, cfg["measure"]["wick_cutoff"], a=cfg["measure"]["a"])


def _dispersion(value):
    try:
        return float(value)
    except ValueError:
        return value


def cmd_sample(cfg, out, h, threads):
    lattice = build_lattice(cfg["lattice"]["dimension"], cfg["lattice"]["n_cut"])
    n, seed = cfg["sampling"]["members"], cfg["run"]["seed"]
    if cfg["sampling"]["kind"] == "gibbs":
        e = sample_gibbs(lattice, n, seed, a=cfg["measure"]["a"])
    else:
        e = sample_ensemble(GaussianSpec(lattice, cfg["measure"]["a"]), n, seed)
    e.to_jsonl(os.path.join(out, "ensemble.jsonl"), config_hash=h)
    info = {k: v for k, v in e.meta.items() if k in ("min_stage_ess", "unique_ancestors", "aN", "master_seed")}
    return {"members": len(e), "provenance": e.provenance, "ess": e.ess, **info}, {}


def cmd_moments(cfg, out, h, threads):
    res = ex.gaussian_moments(cfg["sampling"]["moment_max_k2"], samples=cfg["sampling"]["samples"],
                              seed=cfg["run"]["seed"], a=cfg["measure"]["a"], dim=cfg["lattice"]["dimension"])
    write_csv(os.path.join(out, "moments.csv"), res["rows"], ["mode", "p", "mc", "se", "oracle", "z"], h)
    return {"max_abs_z": res["max_abs_z"], "max_abs_z_mean": res["max_abs_z_mean"]}, {"gaussian_moments": res["passed"]}


def cmd_wick_bound(cfg, out, h, threads):
    res = ex.wick_uniform_bound(cfg["sampling"]["cutoffs"], cfg["measure"]["beta"],
                                min(cfg["sampling"]["samples"], 20_000), cfg["run"]["seed"],
                                dim=cfg["lattice"]["dimension"])
    write_csv(os.path.join(out, "wick_bound.csv"), res["rows"],
              ["N", "estimator", "value", "stderr", "samples", "beta", "seed"], h)
    summary = {k: res[k] for k in ("renormalized_ratio", "renormalized_exact_ratio", "plain_increasing")}
    return summary, {"renormalized_plateau": res["plateau_passed"], "plain_increasing": res["plain_increasing"]}


def cmd_second_moment(cfg, out, h, threads):
    seed, samples = cfg["run"]["seed"], cfg["sampling"]["samples"]
    res = ex.wick_second_moment(cfg["sampling"]["modes"], cfg["lattice"]["n_cut"], samples, seed)
    grad = ex.gradient_moment(samples=min(samples, 50_000), seed=seed + 1)
    write_csv(os.path.join(out, "second_moment.csv"), res["rows"],
              ["mode", "mc", "se", "oracle", "z", "printed", "z_printed"], h)
    write_csv(os.path.join(out, "gradient_moment.csv"), grad["rows"],
              ["j", "k", "mc", "se", "oracle", "z", "printed", "z_printed"], h)
    return {"counterterm": res["counterterm"]}, {"wick_second_moment": res["passed"], "gradient_moment": grad["passed"]}


def cmd_evolve(cfg, out, h, threads):
    lattice = build_lattice(cfg["lattice"]["dimension"], cfg["lattice"]["n_cut"])
    fl = cfg["flow"]
    seed, n = cfg["run"]["seed"], fl["trajectories"]
    if fl["initial"] == "gibbs":
        X = sample_gibbs(lattice, max(200, n), seed).coeffs[:n]
    else:
        X = sample_ensemble(GaussianSpec(lattice, cfg["measure"]["a"]), n, seed).coeffs
    flow_cfg = FlowConfig(dt=fl["dt"], T=fl["T"], wick=_wick(cfg, lattice), integrator=fl["integrator"],
                          dispersion=_dispersion(fl["angular_convention"]), drift_tolerance=fl["drift_tolerance"],
                          strang_substep=fl["strang_substep"])
    if fl["project_each_step"]:
        log.warning("project_each_step is ignored by `evolve`; use surface-invariance")
    final, report = evolve_parallel(X, flow_cfg, threads)
    report.to_csv(os.path.join(out, "drift.csv"), config_hash=h)
    records = [{"member": i, "t": fl["T"], "field": SpectralField(lattice, row).to_record()} for i, row in enumerate(final)]
    write_field_records(os.path.join(out, "final_states.jsonl"), records, h)
    s = report.summary()
    return s, {"mass_drift": s["max_mass_drift"] <= 1e-8, "hamiltonian_drift": s["max_hamiltonian_drift"] <= 1e-6}


def cmd_gibbs_invariance(cfg, out, h, threads):
    fl, inv = cfg["flow"], cfg["invariance"]
    res = ex.gibbs_invariance(cfg["lattice"]["dimension"], cfg["lattice"]["n_cut"], cfg["sampling"]["members"],
                              fl["T"], fl["dt"], cfg["run"]["seed"], inv["alpha"], _dispersion(inv["dispersion"]),
                              inv["negative_control"], threads)
    reps = report_dict(res["reports"])
    write_json(os.path.join(out, "gibbs_invariance.json"), reps, h)
    crit = {"gibbs_no_rejection": reps["gibbs"]["passed"]}
    if "negative_control" in reps:
        crit["negative_control_rejects"] = not reps["negative_control"]["passed"]
    return {"rejections": {k: v for k, v in ((n, res["reports"][n].rejections) for n in res["reports"])}}, crit


def cmd_surface_invariance(cfg, out, h, threads):
    fl, inv, lv = cfg["flow"], cfg["invariance"], cfg["level"]
    res = ex.surface_invariance(cfg["lattice"]["dimension"], cfg["lattice"]["n_cut"], cfg["sampling"]["members"],
                                fl["T"], fl["dt"], cfg["run"]["seed"], inv["alpha"], lv["delta"], tuple(lv["refine"]),
                                lv["r"], _dispersion(inv["dispersion"]), lv["bandwidth"], threads=threads)
    payload = {
        "r": res["r"],
        "conditional": res["report"].to_dict(),
        "surface_expectation": {name: vars(res[name]) for name in ("one", "E", "mode")},
        "delta_refinement": res["refinement"],
        "checks": res["checks"],
    }
    write_json(os.path.join(out, "surface_invariance.json"), payload, h)
    return {"r": res["r"], "acceptance_fraction": res["report"].info.get("acceptance_fraction")}, res["checks"]


def cmd_series(cfg, out, h, threads):
    s = cfg["series"]
    res = ex.appendix_series(tuple(s["K"]), s["beta"], s["dimension"])
    rows = []
    for sid in ("S1", "S2"):
        r = res[sid]
        for i, K in enumerate(r["K"]):
            rows.append(dict(series=sid, K=K, beta=s["beta"], partial_sum=r["sums"][i],
                             increment=r["increments"][i - 1] if i else float("nan")))
    write_csv(os.path.join(out, "series.csv"), rows, ["series", "K", "beta", "partial_sum", "increment"], h)
    summary = {sid: {"final_fraction": res[sid]["final_fraction"], "decreasing": res[sid]["decreasing"]}
               for sid in ("S1", "S2")}
    return summary, {"S1": res["S1"]["passed"], "S2": res["S2"]["passed"]}


COMMANDS = {
    "sample": (cmd_sample, "draw an ensemble (mu_a or Gibbs) to JSONL"),
    "moments": (cmd_moments, "Gaussian moment checks against 2^p p! |k|^{-ap}"),
    "wick-bound": (cmd_wick_bound, "H^beta aggregate of the renormalized and plain cubic term across cutoffs"),
    "second-moment": (cmd_second_moment, "second-moment and gradient-moment oracles vs Monte Carlo"),
    "evolve": (cmd_evolve, "integrate trajectories and report conservation drift"),
    "gibbs-invariance": (cmd_gibbs_invariance, "KS panel before/after the flow on Gibbs members"),
    "surface-invariance": (cmd_surface_invariance, "conditional (level-set) invariance and surface expectations"),
    "series": (cmd_series, "partial sums of the two lattice series"),
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="wicknls",
        description="Spectral and Monte Carlo experiments for the Wick-renormalized cubic NLS.",
        epilog=describe_defaults() + "\n\nexit codes: 0 pass, 1 acceptance failure, 2 config error, 3 runtime error",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", metavar="subcommand")
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, description=help_, epilog=describe_defaults(),
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", help="INI file; omitted keys take the defaults listed below")
        sp.add_argument("--seed", type=int, help="override [run] seed")
        sp.add_argument("--out", help="override [run] out (output directory)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for ensemble evolution (default 1)")
        sp.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit with 2 already
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config) if args.config else parse_config_text("")
        cfg = cfg.with_overrides(seed=args.seed, out=args.out)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    h = cfg.hash
    fn = COMMANDS[args.command][0]
    t0 = time.perf_counter()
    try:
        with staged_output(cfg["run"]["out"]) as out:
            log.info("running %s (config %s)", args.command, h)
            summary, criteria = fn(cfg, out, h, args.threads)
            passed = all(bool(v) for v in criteria.values())
            with open(os.path.join(out, "effective_config.ini"), "w") as fh:
                fh.write(cfg.to_ini())
            write_json(os.path.join(out, "summary.json"),
                       {"command": args.command, "criteria": {k: bool(v) for k, v in criteria.items()},
                        "passed": passed, "config": cfg.values, **summary}, h)
            write_metadata(os.path.join(out, "metadata.json"), h, args.command, time.perf_counter() - t0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WickNLSError, FloatingPointError, np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for k, v in criteria.items():
        print(f"{'PASS' if v else 'FAIL'}  {args.command}: {k}")
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
