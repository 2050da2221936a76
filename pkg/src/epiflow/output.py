"""Snapshot and monitor output: VTK legacy ASCII and full-precision CSV.

Both formats are bit-stable surfaces: identical runs must produce byte
identical files, so all floats are printed through fixed %g formats.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh
from .verify import MonitorRecord

MONITOR_HEADER = (
    "t,min_S,max_S,min_I,max_I,min_C,max_C,"
    "int_S,int_I,int_R,int_C,int_N,l2_U,h1_U,div_res,picard_iters"
)

_CSV_FIELDS = (
    "t", "min_s", "max_s", "min_i", "max_i", "min_c", "max_c",
    "int_s", "int_i", "int_r", "int_c", "int_n", "l2_u", "h1_u", "div_res",
)


def write_monitor_csv(records, path) -> None:
    """One full-precision row per record under the fixed monitor header."""
    lines = [MONITOR_HEADER]
    for rec in records:
        cells = [f"{getattr(rec, name):.17g}" for name in _CSV_FIELDS]
        cells.append(str(int(rec.picard_iters)))
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_monitor_csv(path) -> dict:
    """Columns of a monitor CSV as arrays, keyed by header name."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=float)
    return {name: data[:, k] for k, name in enumerate(header)}


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_vtk_snapshot(state, mesh: TriMesh, path) -> None:
    """VTK 2.0 legacy ASCII unstructured grid with point data S, I, R, C, p, U.

    Velocity bubble dofs are dropped; only vertex values are written.
    """
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = [
        "# vtk DataFile Version 2.0",
        f"fields at t={state.t:.9g}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} float",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    lines.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    lines.append(f"POINT_DATA {nv}")
    for name, vec in (("S", state.s), ("I", state.i), ("R", state.r),
                      ("C", state.c), ("p", state.p)):
        lines.append(f"SCALARS {name} float 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in vec)
    stride = nv + nt
    u1 = state.u[:nv]
    u2 = state.u[stride:stride + nv]
    lines.append("VECTORS U float")
    lines.extend(f"{_fmt(a)} {_fmt(b)} 0" for a, b in zip(u1, u2))
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK snapshot {path}: {exc}") from exc


def read_vtk_point_data(path) -> dict:
    """Parse points, cells, scalar fields, and the U vectors back from a snapshot."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    out: dict = {}
    k = 0
    while k < len(tokens):
        line = tokens[k]
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            pts = [tuple(map(float, tokens[k + 1 + j].split()[:2])) for j in range(n)]
            out["points"] = np.array(pts)
            k += n
        elif line.startswith("CELLS"):
            n = int(line.split()[1])
            cells = [tuple(map(int, tokens[k + 1 + j].split()[1:])) for j in range(n)]
            out["cells"] = np.array(cells)
            k += n
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            n = out["points"].shape[0]
            vals = [float(tokens[k + 2 + j]) for j in range(n)]
            out[name] = np.array(vals)
            k += n + 1
        elif line.startswith("VECTORS"):
            name = line.split()[1]
            n = out["points"].shape[0]
            vals = [tuple(map(float, tokens[k + 1 + j].split()[:2])) for j in range(n)]
            out[name] = np.array(vals)
            k += n
        k += 1
    return out
