"""Command-line front end.

Every subcommand is a pure function of (config, input files): seeds come
from the config (or the --seed override), never from ambient entropy, and
reductions are ordered, so re-runs write byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import _dp
from .config import ConfigError, RunConfig
from .diagnostics import (
    box_convergence,
    degeneracy_scan,
    intermittency_report,
    mass_concentration_report,
    truncation_convergence,
    write_report_csv,
    write_report_json,
)
from .environment import read_atoms_csv, replica_rng, sample_environment, write_atoms_csv
from .measures import INF
from .moments import lyapunov_estimate, mc_moment, write_moments_csv
from .partition import field, forward_weights, free_end, point_to_point
from .polymer import sample_path
from .sizebias import build_functional, sizebias_identity_check


def _fail(kind: str, message: str, code: int = 2):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    raise SystemExit(code)


def _load_config(args) -> RunConfig:
    try:
        cfg = RunConfig.from_file(args.config)
    except FileNotFoundError:
        _fail("config-not-found", f"no such config file: {args.config}")
    except ConfigError as exc:
        _fail("config-invalid", str(exc))
    if getattr(args, "seed", None) is not None:
        cfg = RunConfig.from_dict({**cfg.echo(), "seed": args.seed})
    return cfg


def _parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        _fail("bad-argument", f"cannot parse point {text!r}; expected 'x1,x2,...'")


def _parse_grid_spec(spec: str) -> tuple[np.ndarray, float]:
    """Product grid from 'lo:hi:n' per axis, axes joined by ';'. Returns (points, cell volume)."""
    axes = []
    vol = 1.0
    for part in spec.split(";"):
        try:
            lo, hi, n = part.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
        except ValueError:
            _fail("bad-argument", f"cannot parse grid spec {part!r}; expected 'lo:hi:n'")
        if n < 2 or hi <= lo:
            _fail("bad-argument", f"grid spec {part!r} needs hi > lo and n >= 2")
        axes.append(np.linspace(lo, hi, n))
        vol *= (hi - lo) / (n - 1)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    return pts, vol


def cmd_sample_noise(args) -> int:
    cfg = _load_config(args)
    window = cfg.window()
    env = sample_environment(cfg.measure, cfg.dimension, window, cfg.truncation_a, cfg.seed)
    write_atoms_csv(env, args.out)
    print(f"wrote {len(env)} atoms to {args.out}")
    return 0


def cmd_partition(args) -> int:
    try:
        env = read_atoms_csv(args.atoms)
    except FileNotFoundError:
        _fail("atoms-not-found", f"no such atoms file: {args.atoms}")
    if args.x is None and not args.free_end:
        _fail("bad-argument", "pass --x 'x1,..,xd' or --free-end")
    t = args.t if args.t is not None else env.window.horizon
    weights = forward_weights(env, args.beta)
    if args.free_end:
        pv = free_end(env, args.beta, t, weights=weights)
    else:
        pv = point_to_point(env, args.beta, t, _parse_point(args.x), weights=weights)
    print(f"log_z {pv.log_value:.17g}")
    print(f"z {pv.value:.17g}")
    return 0


def cmd_moments(args) -> int:
    cfg = _load_config(args)
    n = args.replicas if args.replicas is not None else cfg.replicas
    t = args.t if args.t is not None else cfg.horizon_t
    policy = "auto" if cfg.box_policy == "auto" else cfg.box_halfwidth
    est = mc_moment(
        cfg.measure, cfg.dimension, cfg.beta, cfg.truncation_a, t, args.p, n,
        cfg.seed, window_policy=policy,
    )
    write_moments_csv([est], args.out)
    print(f"mean {est.mean:.17g} stderr {est.stderr:.17g} (n={est.replica_count})")
    if est.divergent:
        print("warning: moment order at/above the finite-moment threshold; mean untrustworthy")
    return 0


def cmd_lyapunov(args) -> int:
    cfg = _load_config(args)
    t_grid = [float(v) for v in args.t_grid.split(",")]
    policy = "auto" if cfg.box_policy == "auto" else cfg.box_halfwidth
    fit = lyapunov_estimate(
        cfg.measure, cfg.dimension, cfg.beta, args.p, t_grid,
        args.replicas if args.replicas is not None else cfg.replicas,
        cfg.truncation_a, cfg.seed, window_policy=policy,
    )
    write_moments_csv(fit.per_t, args.out)
    print(f"gamma_hat {fit.gamma_hat:.17g} slope_stderr {fit.slope_stderr:.17g}")
    return 0


def cmd_sizebias_check(args) -> int:
    cfg = _load_config(args)
    blk = cfg.experiment
    params = dict(
        box_radius=float(blk.get("box_radius", 1.0)),
        jump_lo=float(blk.get("jump_lo", cfg.truncation_a)),
        jump_hi=float(blk.get("jump_hi", INF)),
        horizon=cfg.horizon_t,
    )
    try:
        g = build_functional(args.g, **params)
    except ValueError as exc:
        _fail("bad-argument", str(exc))
    policy = "auto" if cfg.box_policy == "auto" else cfg.box_halfwidth
    rep = sizebias_identity_check(
        cfg.measure, cfg.dimension, cfg.beta, cfg.truncation_a, cfg.horizon_t,
        g, cfg.replicas, cfg.seed, window_policy=policy,
    )
    with open(args.out, "w") as fh:
        fh.write(rep.to_json())
        fh.write("\n")
    print(f"lhs {rep.lhs:.6g}+-{rep.lhs_stderr:.2g} rhs {rep.rhs:.6g}+-{rep.rhs_stderr:.2g} z {rep.z_score:.3f}")
    return 0


def cmd_polymer(args) -> int:
    try:
        env = read_atoms_csv(args.atoms)
    except FileNotFoundError:
        _fail("atoms-not-found", f"no such atoms file: {args.atoms}")
    horizon = env.window.horizon
    grid = np.linspace(0.0, horizon, args.grid_points)
    weights = forward_weights(env, args.beta)
    cols = ["replica", "grid_t"] + [f"x{i + 1}" for i in range(env.dimension)]
    pins_lines = []
    with open(args.out, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for m in range(args.paths):
            rng = replica_rng(args.seed, m)
            path = sample_path(env, args.beta, horizon, grid, rng, weights=weights)
            for k in range(len(grid)):
                row = [str(m), f"{grid[k]:.17g}"] + [f"{v:.17g}" for v in path.trajectory[k]]
                fh.write(",".join(row) + "\n")
            pins_lines.append(",".join(str(i) for i in path.pinned))
    with open(str(args.out) + ".pins", "w") as fh:
        fh.write("\n".join(pins_lines) + "\n")
    print(f"wrote {args.paths} paths on {args.grid_points} grid points to {args.out}")
    return 0


def cmd_field(args) -> int:
    try:
        env = read_atoms_csv(args.atoms)
    except FileNotFoundError:
        _fail("atoms-not-found", f"no such atoms file: {args.atoms}")
    pts, _vol = _parse_grid_spec(args.grid_spec)
    if pts.shape[1] != env.dimension:
        _fail("bad-argument", f"grid spec has {pts.shape[1]} axes, environment is {env.dimension}-dimensional")
    t = args.t if args.t is not None else env.window.horizon
    vals = field(env, args.beta, t, pts)
    cols = [f"x{i + 1}" for i in range(env.dimension)] + ["log_z", "z"]
    with open(args.out, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for pt, pv in zip(pts, vals):
            row = [f"{v:.17g}" for v in pt] + [f"{pv.log_value:.17g}", f"{pv.value:.17g}"]
            fh.write(",".join(row) + "\n")
    print(f"wrote field on {len(pts)} points to {args.out}")
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args)
    blk = dict(cfg.experiment)
    name = args.experiment
    policy_halfwidth = None if cfg.box_policy == "auto" else cfg.box_halfwidth
    if name == "intermittency":
        rep = intermittency_report(
            cfg.measure, cfg.dimension, cfg.beta, cfg.truncation_a,
            blk.get("t_list", [2.0, 4.0, 8.0]), cfg.replicas, cfg.seed,
        )
    elif name == "degeneracy":
        rep = degeneracy_scan(
            cfg.measure, cfg.dimension, cfg.beta, cfg.horizon_t,
            blk.get("x"), blk.get("a_grid", [0.2, 0.1, 0.05]), cfg.replicas, cfg.seed,
            box_halfwidth=policy_halfwidth,
            atom_budget=int(blk.get("atom_budget", 200_000)),
        )
    elif name == "mass-concentration":
        rep = mass_concentration_report(
            cfg.measure, cfg.dimension, cfg.beta, cfg.truncation_a, cfg.horizon_t,
            float(blk.get("alpha_threshold", 0.1)), cfg.replicas, cfg.seed,
        )
    elif name == "truncation":
        rep = truncation_convergence(
            cfg.measure, cfg.dimension, cfg.beta, cfg.horizon_t,
            blk.get("x"), blk.get("a_grid", [0.4, 0.2, 0.1]), cfg.replicas, cfg.seed,
        )
    elif name == "box":
        rep = box_convergence(
            cfg.measure, cfg.dimension, cfg.beta, cfg.truncation_a, cfg.horizon_t,
            blk.get("L_grid", [1.0, 2.0, 4.0, 8.0]), cfg.replicas, cfg.seed,
        )
    else:
        _fail("bad-argument", f"unknown experiment {name!r}")
    write_report_json(rep, args.out)
    write_report_csv(rep, str(args.out) + ".csv")
    print(f"wrote {name} report to {args.out}; verdicts: {rep.verdicts}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="levyheat",
        description="Partition functions, polymers and moment experiments for the heat equation with jump noise",
    )
    ap.add_argument("--threads", type=int, default=None, help="numba thread cap (results do not depend on it)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-noise", help="sample one environment to CSV + sidecar")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample_noise)

    p = sub.add_parser("partition", help="evaluate a partition value on an atoms file")
    p.add_argument("--atoms", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--x", default=None, help="endpoint 'x1,..,xd'")
    p.add_argument("--free-end", action="store_true")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("moments", help="Monte Carlo moment estimate")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("lyapunov", help="slope fit of log moments over a t grid")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--t-grid", required=True, help="'t1,t2,...'")
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lyapunov)

    p = sub.add_parser("sizebias-check", help="two-sided size-bias identity check")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--g", default="one_body_exp")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sizebias_check)

    p = sub.add_parser("polymer", help="sample polymer paths on an atoms file")
    p.add_argument("--atoms", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--grid-points", type=int, default=64)
    p.add_argument("--paths", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_polymer)

    p = sub.add_parser("field", help="point-to-point values on a grid")
    p.add_argument("--atoms", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--t", type=float, default=None)
    p.add_argument(
        "--grid-spec", required=True,
        help="'lo:hi:n' per axis, ';'-joined; use --grid-spec=-2:2:41 for negative bounds",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("report", help="run a packaged experiment")
    p.add_argument("--experiment", required=True,
                   choices=["intermittency", "degeneracy", "mass-concentration", "truncation", "box"])
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        _dp.set_threads(args.threads)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
