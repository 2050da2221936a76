"""Meshes, finite-element spaces, and the operators built on them.

Walks through the geometric substrate of the solver: structured triangle
meshes of the unit square, the scalar and velocity dof layouts, and the
basic mass/stiffness operators with their defining properties.
"""

import numpy as np

from epiflow import (
    DofLayout,
    assemble_mass_p1,
    assemble_stiffness_p1,
    boundary_vertex_set,
    build_unit_square_mesh,
    mesh_size,
)
from epiflow.mesh import dump_vtk

# A structured mesh: every grid cell is split along the same diagonal, so
# refinement is fully deterministic.
mesh = build_unit_square_mesh(8, 8)
print(f"mesh 8x8: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
print(f"longest edge h = {mesh_size(mesh):.4f}")
print(f"boundary vertices: {len(boundary_vertex_set(mesh))}")
print(f"total area: {mesh.area():.15f}")

# Scalar fields live on vertices (P1); velocity adds one interior bubble per
# triangle and per component, which stabilizes the pressure coupling.
p1 = DofLayout.p1_scalar(mesh)
mini = DofLayout.mini_velocity(mesh)
print(f"\nscalar dofs: {p1.dof_count}")
print(f"velocity dofs: {mini.dof_count} = 2*({mesh.n_vertices} + {mesh.n_triangles})")

# The mass matrix integrates products of hat functions; its total sum is the
# domain area because the hats sum to one everywhere.
m = assemble_mass_p1(mesh)
print(f"\nmass-matrix entry sum (domain area): {m.sum():.15f}")

# The stiffness matrix annihilates constants: gradients of the partition of
# unity cancel exactly.
k = assemble_stiffness_p1(mesh, 1.0)
print(f"stiffness times constant vector, max |K 1|: "
      f"{np.abs(k @ np.ones(mesh.n_vertices)).max():.2e}")

# Meshes can be dumped as VTK for inspection in ParaView or similar viewers.
out = "demos/output"
import os

os.makedirs(out, exist_ok=True)
dump_vtk(mesh, f"{out}/mesh_8x8.vtk")
print(f"\nwrote {out}/mesh_8x8.vtk")
