"""Command-line front end.

Exit status: 0 on success, 2 on a configuration or input error, 3 on a
numerical failure (non-finite state, indefinite covariance, bad step).
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .experiments import ClassifyPolicy, Domain, RunConfig, classify_run, simulate, sweep
from .heat import (GammaSeries, LinearSchemeConfig, dirichlet_square, monte_carlo_gamma,
                   strong_error_study)
from .io import write_manifest, write_nodal_csv, write_table, write_vtk
from .mesh import (MeshFormatError, MeshValidityError, PeriodicityError,
                   generate_square_grid, import_mesh)
from .models import PARAMS, NumericalError, StepSizeError
from .noise import GaussianKernel, NotPSDError, SeparableKernel, mu_N_experiment, replica_rng

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("need positive integers")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="stochfem",
                                description="Finite-element solvers for stochastic "
                                            "excitable media.")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: config value, else CPU count)")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mesh-info", help="print mesh statistics")
    m.add_argument("file", nargs="?")
    m.add_argument("--square", nargs=2, metavar=("L", "N"))

    n = sub.add_parser("noise-error", help="P0 noise projection error table")
    n.add_argument("--N", type=_int_list, default=[5, 10, 20, 30])
    n.add_argument("--samples", type=int, default=200)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--k0", type=int, default=1)
    n.add_argument("--p0", type=int, default=1)
    n.add_argument("--l", type=float, default=1.0)
    n.add_argument("--out", help="directory for noise_error.csv")

    for name, text in (("heat-validate", "second moment of the stochastic heat equation"),
                       ("strong-order", "strong convergence rates")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True)

    for name, models in (("simulate", ("fhn", "barkley", "ms")),
                         ("sweep", ("barkley", "ms"))):
        s = sub.add_parser(name, help=f"{name} a reaction model")
        s.add_argument("--model", required=True, choices=models)
        s.add_argument("--config", required=True)
    return p


def _out_dir(cfg):
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _kernel(cfg):
    k = cfg["kernel"]
    if k["type"] == "gaussian":
        return GaussianKernel(k["xi"])
    l = cfg["mesh"]["square_l"]
    return SeparableKernel(k["k0"], k["p0"], l)


def _mesh(cfg):
    m = cfg["mesh"]
    if m["source"] is not None:
        return import_mesh(m["source"])
    return generate_square_grid(m["square_l"], m["square_n"])


# ------------------------------------------------------------------ commands

def cmd_mesh_info(args):
    if (args.file is None) == (args.square is None):
        raise UsageError("give either a mesh file or --square L N")
    if args.square is not None:
        try:
            l, N = float(args.square[0]), int(args.square[1])
        except ValueError:
            raise UsageError("--square expects a length and an integer") from None
        mesh = generate_square_grid(l, N)
    else:
        mesh = import_mesh(args.file)
    print(f"{mesh.n_nodes} nodes, {mesh.n_triangles} triangles")
    print(f"h = {mesh.h:.6g}")
    print(f"rho = {mesh.rho:.6g}")
    print(f"area = {mesh.area:.6g}")
    return 0


def cmd_noise_error(args):
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    table = mu_N_experiment(args.N, args.samples, seed=args.seed, k0=args.k0,
                            p0=args.p0, l=args.l)
    print(f"{'N':>4} {'mu_N':>14} {'stderr':>12}")
    for N, est, se in table.rows():
        print(f"{N:>4} {est:>14.6e} {se:>12.3e}")
    print(f"slope = {table.slope:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        f = write_table(out / "noise_error.csv", ["N", "mu_hat", "stderr"], table.rows())
        write_manifest(out, [f], meta={"command": "noise-error", "seed": args.seed,
                                       "slope": round(table.slope, 10)})
    return 0


def cmd_heat_validate(args):
    cfg = cfgmod.load(args.config)
    if cfg["mesh"]["source"] is not None:
        raise cfgmod.ConfigError("mesh.source", "heat-validate runs on the square grid")
    l, N = cfg["mesh"]["square_l"], cfg["mesh"]["square_n"]
    dt, t_end = cfg["time"]["dt"], cfg["time"]["t_end"]
    sigma = cfg["noise"]["sigma"]
    kernel = _kernel(cfg)
    n_steps = int(round(t_end / dt))
    run = LinearSchemeConfig(sigma, dt, n_steps, kernel, l=l, N=N,
                             discretization=cfg["noise"]["discretization"], seed=cfg.seed)
    out = _out_dir(cfg)
    ops = dirichlet_square(l, N)
    est = monte_carlo_gamma(run, cfg["heat"]["replicas"], ops=ops)
    gamma = GammaSeries(l, sigma, kernel, K_max=cfg["heat"]["k_max"])(est.times)
    band = np.sqrt(dt) + est.h
    inside = np.abs(est.mean - gamma) <= band
    rows = [(t, g, m, s, int(ok)) for t, g, m, s, ok
            in zip(est.times, gamma, est.mean, est.stderr, inside)]
    f = write_table(out / "heat_gamma.csv", ["t", "gamma_analytic", "gamma_mc", "stderr", "in_band"],
                    rows)
    write_manifest(out, [f], meta={"command": "heat-validate", "seed": cfg.seed})
    print(f"h = {est.h:.6g}, band = {band:.6g}")
    print(f"fraction of times inside band: {inside.mean():.4f}")
    return 0


def cmd_strong_order(args):
    cfg = cfgmod.load(args.config)
    s = cfg["strong"]
    study = strong_error_study(n_space=tuple(int(v) for v in s["n_space"]),
                               dts=tuple(float(v) for v in s["dts"]),
                               replicas=s["replicas"], seed=cfg.seed, coupled=s["coupled"],
                               fine_dt=s["fine_dt"], fine_N=s["fine_n"], sigma=s["sigma"],
                               k0=cfg["kernel"]["k0"], p0=cfg["kernel"]["p0"],
                               l=cfg["mesh"]["square_l"])
    out = _out_dir(cfg)
    rows = [("space", r.N, r.h, r.dt, r.err, r.stderr) for r in study.spatial]
    rows += [("time", r.N, r.h, r.dt, r.err, r.stderr) for r in study.temporal]
    f = write_table(out / "strong_order.csv", ["sweep", "N", "h", "dt", "err", "stderr"],
                    rows)
    f2 = write_table(out / "strong_order_summary.csv", ["spatial_rate", "temporal_rate"],
                     [(study.spatial_rate, study.temporal_rate)])
    write_manifest(out, [f, f2], meta={"command": "strong-order", "seed": cfg.seed,
                                   "spatial_rate": round(study.spatial_rate, 10),
                                   "temporal_rate": round(study.temporal_rate, 10)})
    for r in rows:
        print(f"{r[0]:>5} N={r[1]:<4d} h={r[2]:.4g} dt={r[3]:.4g} err={r[4]:.4e} "
              f"se={r[5]:.2e}")
    print(f"spatial rate = {study.spatial_rate:.4f}")
    print(f"temporal rate = {study.temporal_rate:.4f}")
    return 0


def _model_params(cfg, model):
    kw = {k: v for k, v in cfg["model"].items() if k != "name"}
    return PARAMS[model](sigma=cfg["noise"]["sigma"], **kw)


def _domain(cfg, kernel, seed):
    mesh = _mesh(cfg)
    period = cfg["mesh"]["square_l"] if cfg["mesh"]["source"] is None else None
    return Domain.build(mesh, boundary=cfg["mesh"]["boundary"], kernel=kernel,
                        discretization=cfg["noise"]["discretization"], seed=seed,
                        period=period)


def _policy(cfg):
    return ClassifyPolicy(**cfg["classify"])


def _run_config(cfg):
    t = cfg["time"]
    snap = cfg["output"]["snapshot_every"]
    if snap and snap % t["record_every"]:
        raise cfgmod.ConfigError("output.snapshot_every",
                                 "must be a multiple of time.record_every")
    return RunConfig(dt=t["dt"], t_end=t["t_end"], record_every=t["record_every"],
                     snapshot_every=snap)


def cmd_simulate(args):
    cfg = cfgmod.load(args.config, model=args.model)
    params = _model_params(cfg, args.model)
    run_cfg = _run_config(cfg)
    policy = _policy(cfg)
    domain = _domain(cfg, _kernel(cfg), cfg.seed)
    out = _out_dir(cfg)
    rec = simulate(args.model, params, domain, run_cfg, replica_rng(cfg.seed), policy)

    files = []
    mesh = domain.ops.mesh
    for k, (t, u, v) in enumerate(rec.snapshots):
        files.append(write_vtk(out / f"snapshot_{k:05d}.vtk", mesh, {"u": u, "v": v},
                               title=f"{args.model} t={t:.6g}"))
        if cfg["output"]["csv_snapshots"]:
            files.append(write_nodal_csv(out / f"snapshot_{k:05d}.csv", mesh,
                                         {"u": u, "v": v}))
    files.append(write_table(
        out / "record.csv", ["t", "activated_fraction", "components", "nucleations"],
        zip(rec.times, rec.activated_fraction, rec.component_count.tolist(),
            rec.nucleations.tolist())))
    meta = {"command": "simulate", "model": args.model, "seed": cfg.seed}
    if rec.failure is None:
        wc = classify_run(rec, policy)
        meta["label"] = wc.label
        print(f"label = {wc.label}")
    else:
        meta["failure"] = rec.failure
    write_manifest(out, files, meta=meta)
    print(f"{len(rec.snapshots)} snapshots, {len(rec.times)} frames written to {out}")
    if rec.failure is not None:
        raise NumericalError(rec.failure)
    return 0


def cmd_sweep(args):
    cfg = cfgmod.load(args.config, model=args.model)
    threads = args.threads if args.threads is not None else cfg.threads
    threads = threads if threads is not None else (os.cpu_count() or 1)
    if threads < 1:
        raise cfgmod.ConfigError("--threads", "must be at least 1")
    params = _model_params(cfg, args.model)
    run_cfg = _run_config(cfg)
    policy = _policy(cfg)
    domain = _domain(cfg, _kernel(cfg), cfg.seed)
    sw = cfg["sweep"]
    out = _out_dir(cfg)
    res = sweep(args.model, (sw["axis1"], sw["axis1_values"]),
                (sw["axis2"], sw["axis2_values"]), sw["seeds_per_cell"], params, domain,
                run_cfg, policy, seed=cfg.seed, threads=threads)
    f1 = write_table(out / "sweep.csv",
                     ["axis1", "axis2", "seed", "label", "max_fraction", "sustain_time",
                      "components_late", "nucleations"],
                     [(r.axis1, r.axis2, r.seed, r.label, r.max_fraction, r.sustain_time,
                       r.components_late, r.nucleations) for r in res.rows])
    hist_keys = list(res.cells[0].histogram)
    f2 = write_table(out / "sweep_summary.csv",
                     ["axis1", "axis2", "modal", *hist_keys, "transition",
                      "mean_nucleations"],
                     [(c.axis1, c.axis2, c.modal, *(c.histogram[k] for k in hist_keys),
                       int(c.transition), c.mean_nucleations) for c in res.cells])
    write_manifest(out, [f1, f2], meta={"command": "sweep", "model": args.model,
                                        "seed": cfg.seed, "axis1": sw["axis1"],
                                        "axis2": sw["axis2"]})
    for c in res.cells:
        flag = " T" if c.transition else ""
        print(f"{sw['axis1']}={c.axis1:g} {sw['axis2']}={c.axis2:g}: {c.modal}{flag} "
              f"{c.histogram}")
    failures = [r for r in res.rows if r.failure]
    if failures:
        print(f"{len(failures)} run(s) failed numerically", file=sys.stderr)
    return 0


COMMANDS = {
    "mesh-info": cmd_mesh_info,
    "noise-error": cmd_noise_error,
    "heat-validate": cmd_heat_validate,
    "strong-order": cmd_strong_order,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UsageError, MeshFormatError, MeshValidityError, PeriodicityError,
            FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, NotPSDError, StepSizeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
