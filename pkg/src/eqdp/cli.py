"""Command-line front end: solve, simulate, audit Monte Carlo error.

Configs are JSON documents:

    {
      "problem": "lqr",                  # a name from list-problems
      "params": { ... builder fields ... },
      "solver": {
        "mode": "finite" | "infinite",
        "T": 50,                          # finite mode
        "iterations": 50,                 # infinite mode
        "N": 1, "gamma": 1.0, "seed": 0,
        "workers": null, "backend": "mc"  # or "exact"
      },
      "out": "optional/output/dir"
    }

Exit codes: 0 ok, 2 config error, 3 solver pathology, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import problems
from .dp import Solution, dp_finite, dp_infinite, mc_error, simulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PATHOLOGY = 3
EXIT_IO = 4


class ConfigError(Exception):
    pass


def _load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise IOError(f"cannot read config {path}: {e}") from e
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"config parse error in {path} at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _resolve_workers(args_workers, solver_cfg):
    # Flag wins over the EQDP_WORKERS env var, which wins over the config.
    if args_workers is not None:
        return args_workers
    env = os.environ.get("EQDP_WORKERS")
    if env is not None:
        try:
            return int(env)
        except ValueError as e:
            raise ConfigError(f"EQDP_WORKERS is not an integer: {env!r}") from e
    return solver_cfg.get("workers")


def _build(cfg, args):
    solver = cfg.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("'solver' must be an object")
    mode = solver.get("mode", "finite" if "T" in solver else "infinite")
    if mode not in ("finite", "infinite"):
        raise ConfigError(f"unknown solver mode {mode!r}")
    N = int(solver.get("N", 1))
    if N < 1:
        raise ConfigError("solver.N must be at least 1")
    gamma = float(solver.get("gamma", 1.0))
    if not (0.0 < gamma <= 1.0):
        raise ConfigError("solver.gamma must lie in (0, 1]")
    seed = args.seed if args.seed is not None else int(solver.get("seed", 0))
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    workers = _resolve_workers(args.workers, solver)
    backend = getattr(args, "backend", None) or solver.get("backend", "mc")
    if backend not in ("mc", "exact"):
        raise ConfigError(f"unknown backend {backend!r}")
    T = solver.get("T")
    try:
        spec = problems.build_from_config(cfg.get("problem"), cfg.get("params", {}),
                                          T=int(T) if T is not None else None)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad problem config: {e}") from e
    return spec, dict(mode=mode, N=N, gamma=gamma, seed=seed, workers=workers,
                      backend=backend, iterations=solver.get("iterations"))


def _out_dir(cfg, args):
    out = args.out or cfg.get("out") or "."
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as e:
        raise IOError(f"cannot create output directory {out}: {e}") from e
    return out


def _write(path, text):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as e:
        raise IOError(f"cannot write {path}: {e}") from e


def _fmt_mat(M):
    return "[" + "; ".join(" ".join(f"{v:.6g}" for v in row) for row in np.atleast_2d(M)) + "]"


def _summarize(sol: Solution):
    lines = []
    rows = sol.policies
    for t, row in enumerate(rows):
        for s, pol in enumerate(row):
            label = "t=*" if sol.kind == "infinite" else f"t={t}"
            status = sol.statuses[t][s]
            if pol is None:
                lines.append(f"{label} s={s}: status={status}")
            else:
                lines.append(f"{label} s={s}: K={_fmt_mat(pol.A)} k={_fmt_mat(pol.b)} "
                             f"status={status}")
    if sol.kind == "infinite":
        lines.append(f"convergence metric (max coefficient change): {sol.convergence}")
    if sol.diverging:
        lines.append("pathology: diverging (value coefficients exceeded the bound; "
                     "dynamics uncertainty is above the stabilizability threshold)")
    elif sol.pathology():
        lines.append(f"pathology: {sol.pathology()} at {sol.failed_at}")
    for w in sol.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines)


def _cmd_solve(args):
    cfg = _load_config(args.config)
    spec, opts = _build(cfg, args)
    if opts["mode"] == "finite":
        if spec.T is None:
            raise ConfigError("finite mode needs solver.T")
        sol = dp_finite(spec, opts["N"], seed=opts["seed"], workers=opts["workers"],
                        backend=opts["backend"])
    else:
        iterations = opts["iterations"]
        if iterations is None:
            raise ConfigError("infinite mode needs solver.iterations")
        sol = dp_infinite(spec, opts["N"], int(iterations), gamma=opts["gamma"],
                          seed=opts["seed"], workers=opts["workers"],
                          backend=opts["backend"])
    out = _out_dir(cfg, args)
    path = os.path.join(out, "solution.json")
    _write(path, sol.to_json() + "\n")
    print(_summarize(sol))
    print(f"solution written to {path}")
    if not sol.ok():
        print(f"exit: pathology ({sol.pathology()})", file=sys.stderr)
        return EXIT_PATHOLOGY
    return EXIT_OK


def _parse_seeds(text):
    try:
        seeds = [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as e:
        raise ConfigError(f"bad seed list {text!r}") from e
    if not seeds:
        raise ConfigError("empty seed list")
    return seeds


def _cmd_simulate(args):
    cfg = _load_config(args.config)
    spec, opts = _build(cfg, args)
    try:
        with open(args.solution) as fh:
            sol = Solution.from_json(fh.read())
    except OSError as e:
        raise IOError(f"cannot read solution {args.solution}: {e}") from e
    except (KeyError, ValueError) as e:
        raise ConfigError(f"bad solution file: {e}") from e
    if sol.meta.get("n") != spec.n or sol.meta.get("m") != spec.m:
        raise ConfigError("solution dimensions disagree with the problem config")
    x0 = [float(v) for v in args.x0.split(",")]
    if len(x0) != spec.n:
        raise ConfigError(f"x0 needs {spec.n} entries")
    seeds = _parse_seeds(args.seeds)
    out = _out_dir(cfg, args)
    totals = []
    for sd in seeds:
        traj = simulate(spec, sol, x0=x0, s0=args.s0, horizon=args.steps, seed=sd)
        traj.to_csv(os.path.join(out, f"trajectory_seed{sd}.csv"))
        totals.append(traj.total_cost)
    if args.steps == 0:
        stats = {"mean": None, "std": None}
    else:
        stats = {"mean": float(np.mean(totals)), "std": float(np.std(totals))}
    stats_path = os.path.join(out, "simulation_stats.json")
    _write(stats_path, json.dumps({"total_cost": stats, "seeds": seeds,
                                   "steps": args.steps}, sort_keys=True) + "\n")
    print(json.dumps({"total_cost": stats}, sort_keys=True))
    print(f"trajectories and stats written to {out}")
    return EXIT_OK


def _cmd_mc_error(args):
    cfg = _load_config(args.config)
    spec, opts = _build(cfg, args)
    if opts["mode"] != "finite" or spec.T is None:
        raise ConfigError("mc-error needs a finite-horizon config (solver.T)")
    seeds = _parse_seeds(args.seeds)
    if len(seeds) < 2:
        raise ConfigError("mc-error needs at least two seeds")
    report = mc_error(spec, opts["N"], seeds, workers=opts["workers"])
    text = json.dumps(report.to_dict(), sort_keys=True)
    print(text)
    if args.out or cfg.get("out"):
        out = _out_dir(cfg, args)
        _write(os.path.join(out, "mc_error.json"), text + "\n")
    return EXIT_OK


def _cmd_list_problems(args):
    for name, (_, schema) in problems.REGISTRY.items():
        print(f"{name}: {schema}")
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="eqdp",
        description="Solve, simulate, and audit stochastic control problems with "
                    "mode-switching affine dynamics and quadratic costs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a problem config")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--out", default=None)
    p_solve.add_argument("--seed", type=int, default=None)
    p_solve.add_argument("--workers", type=int, default=None)
    p_solve.add_argument("--backend", choices=["mc", "exact"], default=None)
    p_solve.set_defaults(fn=_cmd_solve)

    p_sim = sub.add_parser("simulate", help="roll out a saved solution")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--solution", required=True)
    p_sim.add_argument("--out", default=None)
    p_sim.add_argument("--seeds", required=True, help="comma-separated seeds")
    p_sim.add_argument("--x0", required=True, help="comma-separated state")
    p_sim.add_argument("--s0", type=int, default=0)
    p_sim.add_argument("--steps", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    p_sim.add_argument("--workers", type=int, default=None)
    p_sim.set_defaults(fn=_cmd_simulate)

    p_err = sub.add_parser("mc-error", help="seed-spread audit of the Monte Carlo solve")
    p_err.add_argument("--config", required=True)
    p_err.add_argument("--seeds", required=True, help="comma-separated seeds")
    p_err.add_argument("--out", default=None)
    p_err.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    p_err.add_argument("--workers", type=int, default=None)
    p_err.set_defaults(fn=_cmd_mc_error)

    p_list = sub.add_parser("list-problems", help="print builder names and config schemas")
    p_list.set_defaults(fn=_cmd_list_problems)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except RuntimeError as e:
        print(f"pathology: {e}", file=sys.stderr)
        return EXIT_PATHOLOGY
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
