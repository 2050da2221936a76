"""Structured triangulations of axis-aligned rectangles with boundary tags.

Only the unit square (and general axis-aligned rectangles through the same
builder) is supported: every cell of a regular grid is split along its
bottom-left to top-right diagonal, a fixed convention so that meshes are
bit-for-bit reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIDE_TAGS = ("left", "right", "bottom", "top")


@dataclass(eq=False)
class TriMesh:
    """Conforming triangle mesh of a rectangle.

    Attributes:
        vertices: (n_vertices, 2) coordinates.
        triangles: (n_triangles, 3) vertex indices, counter-clockwise.
        boundary_edges: (n_boundary_edges, 2) vertex index pairs on the boundary.
        boundary_tags: side tag per boundary edge, one of SIDE_TAGS.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    extent: tuple[float, float] = field(default=(1.0, 1.0))

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64)
        self.boundary_tags = np.asarray(self.boundary_tags)
        for arr in (self.vertices, self.triangles, self.boundary_edges, self.boundary_tags):
            arr.flags.writeable = False

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        """Signed area of every triangle (positive for CCW orientation)."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def area(self) -> float:
        return float(self.signed_areas().sum())


def build_unit_square_mesh(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> TriMesh:
    """Triangulate the rectangle (0, lx) x (0, ly) with nx-by-ny cells.

    Produces (nx+1)(ny+1) vertices and 2*nx*ny triangles; each cell is split
    along its bottom-left to top-right diagonal.  Boundary edges carry side
    tags left/right/bottom/top.

    Raises:
        ValueError: if a cell count is not a positive integer.
    """
    if not (isinstance(nx, (int, np.integer)) and isinstance(ny, (int, np.integer))):
        raise ValueError(f"cell counts must be integers, got nx={nx!r}, ny={ny!r}")
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be >= 1, got nx={nx}, ny={ny}")

    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    xv, yv = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([xv.ravel(), yv.ravel()])

    def vid(i, j):
        # vertex at (xs[i], ys[j]); x-major within a row of constant y
        return j * (nx + 1) + i

    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    k = 0
    for j in range(ny):
        for i in range(nx):
            bl, br = vid(i, j), vid(i + 1, j)
            tr, tl = vid(i + 1, j + 1), vid(i, j + 1)
            triangles[k] = (bl, br, tr)
            triangles[k + 1] = (bl, tr, tl)
            k += 2

    edges = []
    tags = []
    for i in range(nx):
        edges.append((vid(i, 0), vid(i + 1, 0)))
        tags.append("bottom")
    for i in range(nx):
        edges.append((vid(i, ny), vid(i + 1, ny)))
        tags.append("top")
    for j in range(ny):
        edges.append((vid(0, j), vid(0, j + 1)))
        tags.append("left")
    for j in range(ny):
        edges.append((vid(nx, j), vid(nx, j + 1)))
        tags.append("right")

    return TriMesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=np.array(edges, dtype=np.int64),
        boundary_tags=np.array(tags),
        extent=(float(lx), float(ly)),
    )


def boundary_vertex_set(mesh: TriMesh) -> set[int]:
    """All vertex indices lying on the boundary of the mesh."""
    return set(int(v) for v in np.unique(mesh.boundary_edges))


def mesh_size(mesh: TriMesh) -> float:
    """Longest edge length over all triangles."""
    p = mesh.vertices[mesh.triangles]
    h = 0.0
    for a, b in ((0, 1), (1, 2), (2, 0)):
        d = p[:, a] - p[:, b]
        h = max(h, float(np.sqrt((d * d).sum(axis=1)).max()))
    return h


def edge_triangle_counts(mesh: TriMesh) -> dict[tuple[int, int], int]:
    """Map each undirected edge to the number of triangles containing it."""
    counts: dict[tuple[int, int], int] = {}
    for tri in mesh.triangles:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
            counts[key] = counts.get(key, 0) + 1
    return counts


def check_mesh(mesh: TriMesh, rel_tol: float = 1e-12) -> None:
    """Validate mesh invariants; raises AssertionError on violation.

    Checks positive signed areas, exact tiling of the rectangle, the
    edge-manifold property, and that the tagged boundary edges are exactly
    the edges owned by a single triangle.
    """
    areas = mesh.signed_areas()
    assert (areas > 0).all(), "non-positive triangle area"
    lx, ly = mesh.extent
    assert abs(areas.sum() - lx * ly) <= rel_tol * lx * ly, "area sum mismatch"
    counts = edge_triangle_counts(mesh)
    tagged = {(min(a, b), max(a, b)) for a, b in mesh.boundary_edges}
    single = {e for e, c in counts.items() if c == 1}
    assert all(c in (1, 2) for c in counts.values()), "edge shared by >2 triangles"
    assert tagged == single, "boundary edge list does not match single-owner edges"


def dump_vtk(mesh: TriMesh, path) -> None:
    """Write the bare mesh as a VTK legacy ASCII unstructured grid."""
    lines = [
        "# vtk DataFile Version 2.0",
        "triangle mesh",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{x:.9g} {y:.9g} 0")
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
