"""Hydrodynamic coupling: constant viscosity disperses, feedback traps.

The full system with an initial vortex.  With constant viscosity the flow
stirs the pathogen along streamlines; when viscosity grows with pathogen
concentration, contaminated zones become sluggish and the pathogen stays
closer to where it was shed.  The pathogen center of mass drifts less in
the feedback run.
"""

import os

import numpy as np

from epiflow import (
    Discretization,
    build_unit_square_mesh,
    experiment_preset,
    initial_data,
    initial_state,
    run,
    write_vtk_snapshot,
)
from epiflow.stepping import MonitorConfig

mesh = build_unit_square_mesh(16, 16)
disc = Discretization(mesh)
t_final = 3.0


def center_of_mass(state):
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    total = disc.integral(state.c)
    return np.array([state.c @ (disc.mass @ x), state.c @ (disc.mass @ y)]) / total


out = "demos/output"
os.makedirs(out, exist_ok=True)
tracks = {}
for exp in ("exp3", "exp4"):
    cfg = experiment_preset(exp).with_(nx=24, ny=24, t_final=t_final)
    state = initial_state(initial_data(cfg.initial), mesh)
    traj = run(state, cfg.params, cfg.controls, t_final,
               MonitorConfig(monitor_cadence=25, snapshot_cadence=250), disc)
    cms = [center_of_mass(snap) for _, snap in traj.snapshots]
    drift = np.linalg.norm(cms[-1] - cms[0])
    tracks[exp] = (traj, drift)
    write_vtk_snapshot(traj.final, mesh, f"{out}/flow_{exp}_final.vtk")
    print(f"{exp}: ||U||_L2 at end {traj.monitors[-1].l2_u:.4e}, "
          f"pathogen drift {drift:.4e}")

print("\nkinetic energy decays faster in the feedback run because pathogen-"
      "\nladen regions are more viscous; the pathogen drifts further under"
      "\nconstant viscosity:")
print(f"  drift exp3 (constant viscosity) = {tracks['exp3'][1]:.4e}")
print(f"  drift exp4 (feedback viscosity) = {tracks['exp4'][1]:.4e}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    labels = {"exp3": "constant viscosity", "exp4": "feedback viscosity"}
    for exp, (traj, _) in tracks.items():
        ts = [r.t for r in traj.monitors]
        ax.plot(ts, [r.l2_u for r in traj.monitors], label=labels[exp])
    ax.set_xlabel("t")
    ax.set_ylabel("velocity L2 norm")
    ax.set_title("flow decay with and without pathogen feedback")
    ax.legend()
    fig.tight_layout()
    fig.savefig(f"{out}/flow_energy_decay.png", dpi=120)
    print(f"wrote {out}/flow_energy_decay.png")
except ImportError:
    print("matplotlib not available; skipping the plot")
