"""Command-line front end.

    hypstab kernels  --config cfg.json [--out DIR]   synthesize and dump kernels
    hypstab simulate --config cfg.json [--out DIR]   run the configured simulation
    hypstab verify   --config cfg.json [--out DIR]   run the invariant battery

Exit codes: 0 ok, 2 config error, 3 solver non-convergence,
4 verification failure, 5 I/O error.  Outputs are deterministic: the same
configuration produces byte-identical CSV files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, initial_condition_from, parse_config, render_config
from .couplings import solve_target_couplings
from .kernelio import (
    render_axis_csv,
    render_kernel_csv,
    render_snapshots_csv,
    render_trajectory_csv,
    write_text,
)
from .kernels import ConvergenceError, solve_control_kernels
from .observer import solve_observer_kernels
from .sim import ControllerSpec, FeedbackSampler, centers, simulate
from .system import InvalidSystemError
from .verify import run_verification

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_VERIFY = 4
EXIT_IO = 5


def _out_dir(cfg, args) -> Path:
    return Path(args.out) if args.out else Path(cfg.run.out_dir)


def cmd_kernels(cfg, out: Path) -> int:
    kern = solve_control_kernels(cfg.system, cfg.grid)
    tc = solve_target_couplings(kern, cfg.system, cfg.grid)
    obs = solve_observer_kernels(cfg.system, cfg.grid)
    axis = kern.grid.axis
    files = {
        "K.csv": render_kernel_csv("K", kern.K, axis),
        "L.csv": render_kernel_csv("L", kern.L, axis),
        "Omega.csv": render_axis_csv([("Omega", kern.omega)], axis),
        "Cminus.csv": render_kernel_csv("Cminus", tc.c_minus, axis),
        "Cplus.csv": render_kernel_csv("Cplus", tc.c_plus, axis),
        "M.csv": render_kernel_csv("M", obs.M, axis),
        "N.csv": render_kernel_csv("N", obs.N, axis),
        "gains.csv": render_axis_csv([("Pplus", obs.p_plus), ("Pminus", obs.p_minus)], axis),
    }
    for name, content in files.items():
        write_text(out / name, content)
    report = {
        "control": {
            "iterations_per_row": list(kern.iterations_used),
            "final_increment": kern.final_increment,
            "increment_history": [list(hist) for hist in kern.increment_history],
        },
        "target_couplings": {
            "iterations": tc.iterations_used,
            "final_increment": tc.final_increment,
        },
        "observer": {
            "iterations_per_row": list(obs.iterations_used),
            "final_increment": obs.final_increment,
        },
    }
    write_text(out / "convergence_report.json", json.dumps(report, indent=2) + "\n")
    print(f"wrote {len(files)} kernel dumps and convergence_report.json to {out}")
    return EXIT_OK


def cmd_simulate(cfg, out: Path) -> int:
    mode = cfg.controller.mode
    kern = obs = None
    feedback = None
    lyap = None
    if mode != "open_loop":
        kern = solve_control_kernels(cfg.system, cfg.grid)
    if mode == "output_feedback":
        obs = solve_observer_kernels(cfg.system, cfg.grid)
    if cfg.controller.delta is not None and cfg.controller.l is not None and kern is not None:
        lyap = (cfg.controller.delta, cfg.controller.l)
        feedback = FeedbackSampler.build(kern, cfg.system, cfg.grid.nx, full=True)
    traj = simulate(
        cfg.system,
        cfg.grid,
        ControllerSpec(mode, kernels=kern, observer=obs),
        initial_condition_from(cfg),
        cfg.run.t_end,
        snapshot_times=cfg.run.snapshot_times,
        lyapunov_params=lyap,
        feedback=feedback,
    )
    write_text(out / "trajectory.csv", render_trajectory_csv(traj, cfg.system.m))
    if cfg.run.snapshot_times:
        write_text(
            out / "snapshots.csv",
            render_snapshots_csv(traj.snapshots, cfg.system.n, cfg.system.m, centers(cfg.grid.nx)),
        )
    status = "truncated (blow-up guard)" if traj.truncated else "completed"
    print(f"simulation {status}: {traj.times.size} samples, final L2 = {traj.l2[-1]:.6e}")
    return EXIT_OK


def cmd_verify(cfg, out: Path) -> int:
    checks, ok = run_verification(cfg, out if out.exists() else None)
    lines = [c.line() for c in checks]
    print("\n".join(lines))
    rows = ["name,measured,bound,status"]
    rows += [
        f"{c.name},{c.measured!r},{c.bound.replace(',', ';')},{'PASS' if c.passed else 'FAIL'}"
        for c in checks
    ]
    write_text(out / "verify_report.csv", "\n".join(rows) + "\n")
    return EXIT_OK if ok else EXIT_VERIFY


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hypstab",
        description="Minimum-time backstepping boundary control for coupled hyperbolic systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("kernels", "simulate", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (default: run.out_dir)")
        p.add_argument("--print-config", action="store_true", help="echo the normalized config and exit")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.print_config:
        print(render_config(cfg), end="")
        return EXIT_OK

    out = _out_dir(cfg, args)
    try:
        if args.command == "kernels":
            return cmd_kernels(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        return cmd_verify(cfg, out)
    except (ConvergenceError,) as exc:
        print(f"error: non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except InvalidSystemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
