"""Command-line entry point: run experiments, verification suites, mesh info."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, parse_config, serialize_config
from .mesh import boundary_vertex_set, build_unit_square_mesh, check_mesh, mesh_size
from .model import initial_data, initial_state
from .output import write_monitor_csv, write_vtk_snapshot
from .stepping import Discretization, StepError, run as run_trajectory


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epiflow",
        description="Finite-element simulator for coupled host/pathogen/flow dynamics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment and write snapshots + monitors")
    p_run.add_argument("--config", help="config file (key = value under [section] headers)")
    p_run.add_argument("--experiment", help="experiment preset overriding the config")
    p_run.add_argument("--out", help="output directory overriding the config")

    p_ver = sub.add_parser("verify", help="run a verification suite")
    p_ver.add_argument("--suite", required=True, choices=("ode", "mms", "invariants"))

    p_mesh = sub.add_parser("mesh-info", help="print mesh statistics")
    p_mesh.add_argument("--nx", type=int, required=True)
    p_mesh.add_argument("--ny", type=int, required=True)
    return parser


def _initial_for(cfg: RunConfig, mesh):
    data = initial_data(cfg.initial, uniform=cfg.uniform_values)
    return initial_state(data, mesh, zero_velocity=not cfg.controls.fluid_enabled)


def run_config(cfg: RunConfig, out_dir: Path):
    """Execute a configured run, writing monitor.csv and VTK snapshots."""
    mesh = build_unit_square_mesh(cfg.nx, cfg.ny)
    disc = Discretization(mesh)
    state = _initial_for(cfg, mesh)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        os.close(fd)
    except FileExistsError:
        raise RuntimeError(
            f"output directory {out_dir} is locked by another run ({lock} exists)"
        ) from None
    try:
        traj = run_trajectory(state, cfg.params, cfg.controls, cfg.t_final,
                              cfg.monitor_config(), disc)
        write_monitor_csv(traj.monitors, out_dir / "monitor.csv")
        for step_index, snap in traj.snapshots:
            write_vtk_snapshot(snap, mesh, out_dir / f"snapshot_{step_index:06d}.vtk")
        (out_dir / "config.cfg").write_text(serialize_config(cfg))
    finally:
        lock.unlink(missing_ok=True)
    return traj


def _cmd_run(args) -> int:
    text = ""
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            print(f"config not found: {path}", file=sys.stderr)
            return 1
        text = path.read_text()
    try:
        cfg = parse_config(text, experiment_override=args.experiment)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out) if args.out else Path(cfg.out_dir)
    try:
        traj = run_config(cfg, out_dir)
    except (StepError, RuntimeError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    last = traj.monitors[-1]
    print(f"finished {cfg.experiment}: t={last.t:g}, "
          f"int_N={last.int_n:.6g}, min_I={last.min_i:.3e}, outputs in {out_dir}")
    return 0


def _cmd_mesh_info(args) -> int:
    try:
        mesh = build_unit_square_mesh(args.nx, args.ny)
        check_mesh(mesh)
    except (ValueError, AssertionError) as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return 1
    print(f"vertices: {mesh.n_vertices}")
    print(f"triangles: {mesh.n_triangles}")
    print(f"boundary_edges: {mesh.boundary_edges.shape[0]}")
    print(f"boundary_vertices: {len(boundary_vertex_set(mesh))}")
    print(f"h: {mesh_size(mesh):.12g}")
    print(f"area: {mesh.area():.12g}")
    return 0


# ---------------------------------------------------------------------------
# verification suites


def _suite_ode() -> int:
    from .model import ModelParams, CoefficientFn
    from .stepping import StepControls
    from .verify import OdeState, compare_pde_to_ode, sir_ode_oracle

    params = ModelParams(alpha=0.0, beta_spec=CoefficientFn.constant(0.3))
    controls = StepControls(dt=0.01, fluid_enabled=False)
    mesh = build_unit_square_mesh(16, 16)
    disc = Discretization(mesh)
    state = initial_state(initial_data("uniform", (0.9, 0.1, 0.0, 0.0)), mesh,
                          zero_velocity=True)
    traj = run_trajectory(state, params, controls, 40.0, disc=disc)
    ode = sir_ode_oracle(params, OdeState(0.9, 0.1, 0.0), 40.0, 0.001)
    cmp = compare_pde_to_ode(traj, ode, disc.area)
    for name, dev in sorted(cmp.per_compartment.items()):
        print(f"compartment {name.upper()}: max relative deviation {dev:.6e}")
    print(f"max relative deviation: {cmp.max_deviation:.6e} (threshold 1e-3)")
    ok = cmp.max_deviation <= 1e-3
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _suite_mms() -> int:
    from .verify import (decaying_sine_case, mms_scalar_study, mms_stokes_study,
                         vortex_stokes_case)

    ok = True
    case = decaying_sine_case(diffusion=0.1, decay=0.4, advected=True)
    table = mms_scalar_study(case, (16, 32, 64), t_final=0.25)
    print("scalar transport study (advection + diffusion + reaction):")
    print(table.format())
    rate = table.rates("l2")[-1]
    print(f"final L2 rate {rate:.3f} (threshold 1.9)")
    ok &= rate >= 1.9

    stokes = vortex_stokes_case(nu0=0.1)
    table = mms_stokes_study(stokes, (16, 32, 64))
    print("steady flow study (constant viscosity):")
    print(table.format())
    vrate, prate = table.rates("vel_h1")[-1], table.rates("p_l2")[-1]
    print(f"final velocity H1 rate {vrate:.3f} (threshold 0.9), "
          f"pressure L2 rate {prate:.3f} (threshold 0.9)")
    ok &= vrate >= 0.9 and prate >= 0.9
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _suite_invariants() -> int:
    from .config import experiment_preset
    from .model import ModelParams, initial_data as make_initial
    from .stepping import StepControls, Stepper

    ok = True
    mesh = build_unit_square_mesh(16, 16)
    disc = Discretization(mesh)

    # population balance on a short default-experiment run
    cfg = experiment_preset("exp1").with_(nx=16, ny=16, t_final=2.0)
    traj = run_config_in_memory(cfg, disc)
    defect = population_balance_defect(traj, cfg, disc)
    print(f"population balance: max relative defect {defect:.3e} (threshold 1e-6)")
    ok &= defect <= 1e-6

    # implicit diffusion + decay of the pathogen is a contraction (no flow, no shedding)
    params = cfg.params.with_(alpha=0.0)
    stepper = Stepper(disc, params, cfg.controls)
    st = _initial_for(cfg, mesh)
    norms = [disc.l2(st.c)]
    for _ in range(100):
        st, _rep = stepper.step(st)
        norms.append(disc.l2(st.c))
    worst_rise = float(np.diff(norms).max())
    print(f"pathogen decay: max norm increase {worst_rise:.3e} (threshold 1e-9)")
    ok &= worst_rise <= 1e-9

    # viscous energy decay without convection or forcing, plus incompressibility
    params = ModelParams()
    controls = StepControls(dt=0.01, fluid_enabled=True, momentum_convection=False)
    state = initial_state(make_initial("localized_outbreak"), mesh)
    stepper = Stepper(disc, params, controls)
    energies = [disc.velocity_l2(state.u)]
    div_ok = True
    for _ in range(50):
        state, rep = stepper.step(state)
        energies.append(disc.velocity_l2(state.u))
        div_ok &= rep.div_inf <= 1e-8 * max(1.0, float(np.abs(state.u).max()))
    worst_rise = float(np.diff(energies).max())
    print(f"flow energy decay: max norm increase {worst_rise:.3e} (threshold 1e-9)")
    ok &= worst_rise <= 1e-9
    print(f"discrete incompressibility: {'ok' if div_ok else 'violated'}")
    ok &= div_ok
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def run_config_in_memory(cfg: RunConfig, disc: Discretization):
    state = _initial_for(cfg, disc.mesh)
    return run_trajectory(state, cfg.params, cfg.controls, cfg.t_final,
                          cfg.monitor_config(), disc)


def population_balance_defect(traj, cfg: RunConfig, disc: Discretization) -> float:
    """Max relative defect of the per-step total-population recurrence."""
    rows = traj.monitors
    p, dt = cfg.params, cfg.controls.dt
    worst = 0.0
    for prev, cur in zip(rows[:-1], rows[1:]):
        lhs = cur.int_n - prev.int_n
        rhs = dt * (p.Lambda * disc.area - p.eta * cur.int_n)
        worst = max(worst, abs(lhs - rhs) / max(prev.int_n, 1e-14))
    return worst


def _cmd_verify(args) -> int:
    if args.suite == "ode":
        return _suite_ode()
    if args.suite == "mms":
        return _suite_mms()
    return _suite_invariants()


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "verify":
        return _cmd_verify(args)
    if args.command == "mesh-info":
        return _cmd_mesh_info(args)
    parser.print_usage()
    return 2


def console_main() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    console_main()
