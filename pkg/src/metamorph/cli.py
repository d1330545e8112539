"""``metamorph`` command line: run, validate and schema subcommands."""

import argparse
import json
import logging
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from . import config as cfgmod
from .ch2 import helmholtz_invert
from .ensemble import EnsembleSpec, run_ensemble
from .errors import ConfigError, MetamorphError
from .fda import generate_fda_signals
from .io import (PLOT_COLUMNS, emit_plot_data, ensure_dir, tidy_rows, write_csv, write_json,
                 write_landmark_trajectory)
from .landmarks import TracerCloud, flow_tracers
from .matching import MatchProblem, match_landmarks
from .noise import derive_seed, sample_wiener_path
from .sde import integrate_path, strong_convergence_order

log = logging.getLogger("metamorph")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


def _ensemble_spec(cfg, system, x0, positions=None):
    integ, ens = cfg["integrator"], cfg["ensemble"]
    return EnsembleSpec(
        system, x0, integ["T"], integ["steps"], method=integ["method"],
        base_seed=ens["base_seed"], realizations=ens["realizations"],
        output_times=cfg["output"].get("output_times"), block_size=ens["block_size"],
        max_failure_fraction=ens["max_failure_fraction"],
        keep_trajectories=ens["dump_trajectories"], positions=positions)


def _first_path(cfg, system):
    integ = cfg["integrator"]
    seed = derive_seed(cfg["ensemble"]["base_seed"], 0)
    return sample_wiener_path(seed, integ["T"] / integ["steps"], integ["steps"], system.n_channels)


def _run_landmark_sde(cfg, base, out, fmts):
    system, x0, tracers = cfgmod.build_landmarks(cfg["system"])
    system.check_state(x0)
    spec = _ensemble_spec(cfg, system, x0)
    stats = run_ensemble(spec)
    written = []
    if "json" in fmts:
        written.append(write_json(os.path.join(out, "stats.json"), stats.to_dict()))
    if "csv" in fmts:
        written += emit_plot_data(stats, os.path.join(out, "stats"))
        path = _first_path(cfg, system)
        integ = cfg["integrator"]
        traj = integrate_path(system, x0, integ["T"], integ["steps"], path, integ["method"])
        written.append(write_landmark_trajectory(os.path.join(out, "trajectory.csv"),
                                                 traj.times, traj.states))
        written += emit_plot_data(traj, os.path.join(out, "trajectory_long.csv"))
        if tracers is not None:
            tr = flow_tracers(TracerCloud(tracers), system, traj, path, integ["method"])
            rows = ([t, j, *tr[k, j]] for k, t in enumerate(traj.times) for j in range(tr.shape[1]))
            d = tr.shape[-1]
            written.append(write_csv(os.path.join(out, "tracers.csv"),
                                     ["t", "tracer"] + [f"x_{k + 1}" for k in range(d)], rows))
        if stats.trajectories is not None:
            rows = (row for r, states in enumerate(stats.trajectories)
                    for row in tidy_rows(stats.times, states, r))
            written.append(write_csv(os.path.join(out, "trajectories_long.csv"), PLOT_COLUMNS, rows))
    return written, {"realizations": stats.count, "failures": stats.failures}


def _ch2_dt_check(system, x0, dt):
    u = helmholtz_invert(x0[0], system.alpha, system.grid)
    speed = max(np.max(np.abs(u)), np.max(np.abs(system.sigma_u)) if system.sigma_u.size else 0.0)
    if speed > 0 and dt > 0.25 * system.grid.dx / speed:
        log.warning("time step %.3g exceeds the advective guideline 0.25*dx/max|u| = %.3g",
                    dt, 0.25 * system.grid.dx / speed)


def _run_ch2_sde(cfg, base, out, fmts):
    system, x0 = cfgmod.build_ch2(cfg["system"], base)
    integ = cfg["integrator"]
    _ch2_dt_check(system, x0, integ["T"] / integ["steps"])
    written = []
    spec = _ensemble_spec(cfg, system, x0)
    if cfg["ensemble"]["realizations"] > 1:
        stats = run_ensemble(spec)
        if "json" in fmts:
            written.append(write_json(os.path.join(out, "stats.json"), stats.to_dict()))
        if "csv" in fmts:
            written += emit_plot_data(stats, os.path.join(out, "stats"))
    traj = integrate_path(system, x0, integ["T"], integ["steps"], _first_path(cfg, system),
                          integ["method"])
    idx = spec.output_indices()
    grid = system.grid
    if "csv" in fmts:
        rows = []
        for k in idx:
            m, rho = traj.states[k]
            u = helmholtz_invert(m, system.alpha, grid)
            rows += [[traj.times[k], grid.x[j], m[j], rho[j], u[j]] for j in range(grid.N)]
        written.append(write_csv(os.path.join(out, "snapshots.csv"), ["t", "x", "m", "rho", "u"], rows))
        im, ir, h = system.invariants(traj.states)
        written.append(write_csv(os.path.join(out, "invariants.csv"), ["t", "int_m", "int_rho", "h"],
                                 zip(traj.times, im, ir, h)))
    if "json" in fmts:
        im, ir, h = system.invariants(traj.states)
        summary = {"int_m": [im[0], im[-1]], "int_rho": [ir[0], ir[-1]], "h": [h[0], h[-1]]}
        written.append(write_json(os.path.join(out, "invariants.json"), summary))
    return written, {}


def _run_match(cfg, base, out, fmts):
    system, x0, _ = cfgmod.build_landmarks(cfg["system"])
    m, integ = cfg["match"], cfg["integrator"]
    prob = MatchProblem(x0[0], np.asarray(m["q_target"], float), system, integ["T"],
                        integ["steps"], m["tol"], m["max_iterations"], m["mode"], m["penalty_sigma"])
    res = match_landmarks(prob)
    written = []
    if "json" in fmts:
        written.append(write_json(os.path.join(out, "match.json"), res.to_dict()))
    if "csv" in fmts:
        written.append(write_landmark_trajectory(os.path.join(out, "trajectory.csv"),
                                                 res.trajectory.times, res.trajectory.states))
    if not res.converged:
        log.warning("matching did not converge: residual %.3g after %d iterations",
                    res.residual, res.iterations)
    return written, {"converged": res.converged}


def _run_fda(cfg, base, out, fmts):
    spec = cfgmod.build_fda(cfg["fda"])
    res = generate_fda_signals(spec, cfg["ensemble"]["base_seed"])
    written = []
    S = len(res.s)
    if "csv" in fmts:
        written.append(write_csv(
            os.path.join(out, "signals.csv"), ["signal", "s", "f"],
            ([i, res.s[j], res.signals[i, j]] for i in range(len(res.signals)) for j in range(S))))
        written.append(write_csv(
            os.path.join(out, "warps.csv"), ["signal", "s", "phi", "phi_inv", "nu"],
            ([i, res.s[j], res.warps[i, j], res.inverse_warps[i, j], res.amplitude[i, j]]
             for i in range(len(res.signals)) for j in range(S))))
    if "json" in fmts:
        written.append(write_json(os.path.join(out, "fda.json"), {
            "n_signals": len(res.signals), "n_samples": S,
            "mean_signal": res.signals.mean(axis=0), "template": spec.template(res.s)}))
    return written, {}


def _run_convergence(cfg, base, out, fmts):
    sysd = cfg["system"]
    if sysd["type"] == "landmarks":
        system, x0, _ = cfgmod.build_landmarks(sysd)
    else:
        system, x0 = cfgmod.build_ch2(sysd, base)
    integ, conv = cfg["integrator"], cfg["convergence"]
    lo, hi = conv["levels"]
    dts = [integ["T"] * 2.0 ** -k for k in range(lo, hi + 1)]
    res = strong_convergence_order(system, x0, integ["T"], dts, conv["paths"], integ["method"],
                                   cfg["ensemble"]["base_seed"],
                                   cfg["ensemble"]["max_failure_fraction"])
    payload = {"slope": res.slope, "dts": res.dts, "errors": res.errors,
               "excluded": res.excluded, "paths": res.paths}
    written = []
    if "json" in fmts:
        written.append(write_json(os.path.join(out, "convergence.json"), payload))
    if "csv" in fmts:
        written.append(write_csv(os.path.join(out, "convergence.csv"), ["dt", "error"],
                                 zip(res.dts, res.errors)))
    return written, {"slope": res.slope}


_RUNNERS = {
    "landmark_sde": _run_landmark_sde,
    "ch2_sde": _run_ch2_sde,
    "landmark_match": _run_match,
    "fda_generate": _run_fda,
    "convergence_study": _run_convergence,
}


def _echo(cfg, base):
    """Config copy with file references made absolute so it re-runs from anywhere."""
    c = json.loads(json.dumps(cfg))
    noise = c.get("system", {}).get("noise", {})
    for key in ("sigma_u", "sigma_nu"):
        spec = noise.get(key)
        if isinstance(spec, dict) and "grid_values_file" in spec:
            spec["grid_values_file"] = os.path.abspath(cfgmod._resolve(spec["grid_values_file"], base))
    return c


def run_scenario(config_path, out=None, seed=None, quiet=False):
    """Run one experiment; returns the process exit code."""
    try:
        raw, base = cfgmod.load(config_path)
        if seed is not None:
            raw.setdefault("ensemble", {})["base_seed"] = int(seed)
        if out is not None:
            raw.setdefault("output", {})["directory"] = out
        cfgmod.validate(raw, base)
        cfg = cfgmod.with_defaults(raw)
    except ConfigError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_INVALID
    odir = cfg["output"]["directory"]
    if not os.path.isabs(odir) and out is None:
        odir = os.path.join(base, odir)
    ensure_dir(odir)
    scen = cfg["scenario"]
    t0 = time.perf_counter()
    try:
        written, info = _RUNNERS[scen](cfg, base, odir, set(cfg["output"]["formats"]))
    except (MetamorphError, ValueError, FloatingPointError) as e:
        print(f"runtime error in scenario {scen!r}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    manifest = {
        "scenario": scen,
        "config": _echo(cfg, base),
        "versions": {"metamorph": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "seeds": {"base_seed": cfg["ensemble"]["base_seed"],
                  "derivation": "realization r uses SeedSequence(base_seed, spawn_key=(r,)); "
                                "channel c of a path uses spawn_key=(c,) under that seed"},
        "wall_time_s": time.perf_counter() - t0,
        "outputs": sorted(os.path.basename(p) for p in written),
        "summary": info,
    }
    write_json(os.path.join(odir, "manifest.json"), manifest)
    if not quiet:
        log.info("%s finished in %.2fs; outputs in %s", scen, manifest["wall_time_s"], odir)
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="metamorph",
                                     description="stochastic metamorphosis experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides output.directory)")
    p_run.add_argument("--seed", type=int, help="base seed (overrides ensemble.base_seed)")
    p_run.add_argument("--quiet", action="store_true")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    sub.add_parser("schema", help="print the config JSON schema")
    args = parser.parse_args(argv)

    if args.command == "schema":
        print(json.dumps(cfgmod.SCHEMA, indent=1))
        return EXIT_OK
    if args.command == "validate":
        try:
            cfgmod.load(args.config)
        except ConfigError as e:
            print(f"validation error: {e}", file=sys.stderr)
            return EXIT_INVALID
        print("ok")
        return EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    return run_scenario(args.config, args.out, args.seed, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
