"""Command-line front end: ``chemoctrl <subcommand> --config FILE``."""
from __future__ import annotations

import argparse
from datetime import datetime
import logging
import os
from pathlib import Path
import sys

import numpy as np

from .checks import eps_sweep, gradient_check, verify_suite
from .config import ConfigError, RunConfig, load_config, save_config
from .diagnostics import diagnose
from .forward import Control, StepError, simulate
from .linsolve import SolverError
from .objective import TargetData
from .optimizer import LineSearchError, optimize
from .snapshot import SnapshotError, read_snapshot, write_csv, write_snapshot

log = logging.getLogger("chemoctrl")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2

DIAG_HEADER = ["step", "time", "mass", "mass_drift", "energy", "dissipation", "min_u", "min_v"]


class VerificationFailed(Exception):
    pass


def _apply_thread_cap():
    cap = os.environ.get("CHEMOCTRL_THREADS")
    if not cap:
        return
    import numba

    numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


def _run_dir(base: Path, command: str, force: bool) -> Path:
    if force:
        base.mkdir(parents=True, exist_ok=True)
        return base
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    out = base / f"{command}-{stamp}"
    k = 1
    while out.exists():
        out = base / f"{command}-{stamp}-{k}"
        k += 1
    out.mkdir(parents=True)
    return out


def _targets(cfg: RunConfig, grid, timegrid, u0, v0, solver) -> TargetData:
    t = cfg["targets"]
    shape = (timegrid.steps + 1,) + grid.dims
    if t["kind"] == "constant":
        return TargetData(np.full(shape, t["u_value"]), np.full(shape, t["v_value"]))
    if t["kind"] == "file":
        ud = read_snapshot(cfg.base_dir / t["u_path"]).values
        vd = read_snapshot(cfg.base_dir / t["v_path"]).values
        grid.check(ud, vd)
        return TargetData(np.broadcast_to(ud, shape).copy(), np.broadcast_to(vd, shape).copy())
    ref = simulate(u0, v0, Control.zeros(grid, timegrid), timegrid, grid, solver)
    return TargetData(ref.u.copy(), ref.v.copy())


def _write_trajectory(out: Path, traj, stride: int, control: Control | None = None):
    spacing = traj.grid.spacing
    times = traj.timegrid.times
    levels = sorted(set(range(0, traj.timegrid.steps + 1, stride)) | {traj.timegrid.steps})
    for n in levels:
        write_snapshot(traj.u[n], out / f"u_{n:05d}.snap", spacing, n, times[n])
        write_snapshot(traj.v[n], out / f"v_{n:05d}.snap", spacing, n, times[n])
        if control is not None:
            write_snapshot(control.values[n], out / f"f_{n:05d}.snap", spacing, n, times[n])


def _write_diagnostics(out: Path, report, seed):
    write_csv(out / "diagnostics.csv", DIAG_HEADER, report.rows())
    summary = dict(report.summary(), seed=seed)
    write_csv(out / "summary.csv", ["key", "value"], summary.items())


def _setup(cfg):
    grid, tg, solver = cfg.grid(), cfg.timegrid(), cfg.solver()
    u0, v0 = cfg.field("u0", grid), cfg.field("v0", grid)
    if np.any(u0 < 0) or np.any(v0 < 0):
        raise ConfigError("initial data must be nonnegative")
    return grid, tg, solver, u0, v0


def cmd_simulate(cfg, out, seed):
    grid, tg, solver, u0, v0 = _setup(cfg)
    f = cfg.control(grid, tg)
    traj = simulate(u0, v0, f, tg, grid, solver)
    report = diagnose(traj, f, 0.0, solver)
    _write_trajectory(out, traj, cfg["output"]["stride"])
    _write_diagnostics(out, report, seed)
    print(f"simulate: {tg.steps} steps, mass drift {report.mass_drift:.3e}, "
          f"||u||_L20/7(Q) = {report.regularity_norm:.6g}, safe dt {traj.safe_dt:.3g} -> {out}")
    return EXIT_OK


def cmd_optimize(cfg, out, seed):
    grid, tg, solver, u0, v0 = _setup(cfg)
    targets = _targets(cfg, grid, tg, u0, v0, solver)
    opts = cfg.optimizer(cfg.control(grid, tg))
    try:
        res = optimize(u0, v0, targets, cfg.weights(), cfg.box(), tg, grid, opts, solver)
    except LineSearchError as exc:
        if exc.result is not None:
            write_csv(out / "iterations.csv", ["iter", "J", "residual", "step", "backtracks"], exc.result.report.rows())
        raise
    report = diagnose(res.trajectory, res.control, 0.0, solver)
    _write_trajectory(out, res.trajectory, cfg["output"]["stride"], res.control)
    _write_diagnostics(out, report, seed)
    write_csv(out / "iterations.csv", ["iter", "J", "residual", "step", "backtracks"], res.report.rows())
    print(f"optimize: {res.report.message}; J = {res.report.J[-1]:.6e}, "
          f"residual = {res.report.residual[-1]:.3e} -> {out}")
    return EXIT_OK


def cmd_check_gradient(cfg, out, seed):
    grid, tg, solver, u0, v0 = _setup(cfg)
    targets = _targets(cfg, grid, tg, u0, v0, solver)
    f = cfg.control(grid, tg)
    rng = np.random.default_rng(seed)
    rows = gradient_check(u0, v0, f, targets, cfg.weights(), grid, tg, cfg["check"]["sigmas"], rng, solver)
    print(f"{'sigma':>10} {'adjoint':>22} {'finite difference':>22} {'rel. error':>11}")
    for s, a, fd, err in rows:
        print(f"{s:10.1e} {a:22.14e} {fd:22.14e} {err:11.3e}")
    write_csv(out / "gradient_check.csv", ["sigma", "adjoint", "finite_difference", "relative_error"], rows)
    best = min(r[3] for r in rows)
    if best > cfg["check"]["threshold"]:
        raise VerificationFailed(f"gradient check failed: best relative error {best:.3e} > {cfg['check']['threshold']:.1e}")
    return EXIT_OK


def cmd_verify(cfg, out, seed):
    grid, tg, solver, u0, v0 = _setup(cfg)
    targets = _targets(cfg, grid, tg, u0, v0, solver)
    f = cfg.control(grid, tg)
    rng = np.random.default_rng(seed)
    results = verify_suite(u0, v0, f, targets, cfg.weights(), grid, tg, cfg["physics"]["eps"], rng, solver,
                           cfg["check"]["sigmas"])
    for r in results:
        print(r.line())
    write_csv(out / "verify.csv", ["check", "passed", "value", "threshold"],
              [(r.name, int(r.passed), r.value, r.threshold) for r in results])
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationFailed("verification failed: " + ", ".join(failed))
    return EXIT_OK


def cmd_sweep_eps(cfg, out, seed):
    grid, tg, solver, u0, v0 = _setup(cfg)
    f = cfg.control(grid, tg)
    rows, slope = eps_sweep(u0, v0, f, grid, tg, cfg["sweep"]["eps_list"], solver)
    print(f"{'eps':>10} {'||u_eps - u||':>16} {'||z_eps - v_eps||':>18}")
    for e, du, dz in rows:
        print(f"{e:10.1e} {du:16.6e} {dz:18.6e}")
    print(f"log-log slope of ||z_eps - v_eps||: {slope:.4f}")
    write_csv(out / "sweep_eps.csv", ["eps", "u_diff_L2Q", "z_minus_v_L2Q"], rows)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "check-gradient": cmd_check_gradient,
    "verify": cmd_verify,
    "sweep-eps": cmd_sweep_eps,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chemoctrl",
                                     description="Chemo-repulsion bilinear control: simulation, adjoints, optimization.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--force", action="store_true", help="write directly into the output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides [output] directory)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _apply_thread_cap()
    try:
        cfg = load_config(args.config)
        base = args.out if args.out is not None else Path(cfg["output"]["directory"])
        out = _run_dir(base, args.command, args.force)
        save_config(cfg, out / "config.ini")
        return COMMANDS[args.command](cfg, out, args.seed)
    except (ConfigError, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except VerificationFailed as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, StepError, LineSearchError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def cli_main(argv=None) -> int:
    """Entry point returning the exit code instead of raising ``SystemExit`` on usage errors."""
    try:
        return main(argv)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
