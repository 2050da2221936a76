"""P1 and P1-bubble finite element spaces, quadrature, and operator assembly.

Scalar fields (pathogen and the three host compartments, plus pressure) live
in the vertex-based P1 space.  Velocity lives in the P1-bubble space: vertex
hats enriched with one cubic bubble per triangle and per component, which is
inf-sup stable against P1 pressure.

Quadrature policy: the 3-point degree-2 rule for constant-coefficient mass
and stiffness, the 6-point degree-4 rule wherever a composed coefficient
(viscosity or transmission laws, infection quotients) or a bubble gradient
appears, and the 12-point degree-6 rule for bubble mass so the velocity mass
matrix is integrated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .linalg import SparseMatrix, csr_from_triplets
from .mesh import TriMesh, boundary_vertex_set

P1_SCALAR = "P1_scalar"
MINI_VELOCITY = "MINI_velocity"
P1_PRESSURE = "P1_pressure"

BUBBLE_SCALE = 27.0  # cubic bubble 27*l1*l2*l3, unit peak at the barycenter


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric rule on the reference triangle; weights sum to its area 1/2."""

    degree: int
    points: tuple  # (nq, 3) barycentric coordinates
    weights: tuple  # (nq,)

    @property
    def lam(self) -> np.ndarray:
        return np.array(self.points, dtype=float)

    @property
    def w(self) -> np.ndarray:
        return np.array(self.weights, dtype=float)


def _cyclic(a, b, c):
    return [(a, b, c), (c, a, b), (b, c, a)]


def _all_perms(a, b, c):
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _make_rules():
    rules = {}
    rules[1] = QuadratureRule(1, ((1 / 3, 1 / 3, 1 / 3),), (0.5,))
    pts = _cyclic(2 / 3, 1 / 6, 1 / 6)
    rules[2] = QuadratureRule(2, tuple(pts), (1 / 6,) * 3)
    # Dunavant degree-4, 6 points
    a1, w1 = 0.816847572980459, 0.109951743655322
    a2, w2 = 0.108103018168070, 0.223381589678011
    pts = _cyclic(a1, (1 - a1) / 2, (1 - a1) / 2) + _cyclic(a2, (1 - a2) / 2, (1 - a2) / 2)
    rules[4] = QuadratureRule(4, tuple(pts), (w1 / 2,) * 3 + (w2 / 2,) * 3)
    # Dunavant degree-6, 12 points
    b1, v1 = 0.873821971016996, 0.050844906370207
    b2, v2 = 0.501426509658179, 0.116786275726379
    c1, c2, v3 = 0.053145049844816, 0.310352451033785, 0.082851075618374
    pts = (
        _cyclic(b1, (1 - b1) / 2, (1 - b1) / 2)
        + _cyclic(b2, (1 - b2) / 2, (1 - b2) / 2)
        + _all_perms(c1, c2, 1 - c1 - c2)
    )
    w = (v1 / 2,) * 3 + (v2 / 2,) * 3 + (v3 / 2,) * 6
    rules[6] = QuadratureRule(6, tuple(pts), w)
    return rules


QUADRATURE_RULES = _make_rules()


def quadrature_rule(min_degree: int) -> QuadratureRule:
    """Smallest stored rule exact for polynomials up to min_degree."""
    for d in sorted(QUADRATURE_RULES):
        if d >= min_degree:
            return QUADRATURE_RULES[d]
    raise ValueError(f"no quadrature rule of degree >= {min_degree}")


@dataclass(frozen=True)
class DofLayout:
    """Maps mesh entities to global degrees of freedom.

    P1 layouts put one dof per vertex.  The velocity layout stacks, per
    component, vertex dofs followed by one bubble dof per triangle; the two
    components are stored consecutively.
    """

    kind: str
    dof_count: int
    n_vertices: int
    n_triangles: int

    @classmethod
    def p1_scalar(cls, mesh: TriMesh) -> "DofLayout":
        return cls(P1_SCALAR, mesh.n_vertices, mesh.n_vertices, mesh.n_triangles)

    @classmethod
    def p1_pressure(cls, mesh: TriMesh) -> "DofLayout":
        return cls(P1_PRESSURE, mesh.n_vertices, mesh.n_vertices, mesh.n_triangles)

    @classmethod
    def mini_velocity(cls, mesh: TriMesh) -> "DofLayout":
        n = 2 * (mesh.n_vertices + mesh.n_triangles)
        return cls(MINI_VELOCITY, n, mesh.n_vertices, mesh.n_triangles)

    @property
    def component_stride(self) -> int:
        if self.kind != MINI_VELOCITY:
            raise ValueError("component_stride only applies to the velocity layout")
        return self.n_vertices + self.n_triangles

    def vertex_dofs(self, component: int = 0) -> np.ndarray:
        if self.kind == MINI_VELOCITY:
            return component * self.component_stride + np.arange(self.n_vertices)
        return np.arange(self.n_vertices)

    def bubble_dofs(self, component: int) -> np.ndarray:
        off = component * self.component_stride + self.n_vertices
        return off + np.arange(self.n_triangles)


# ---------------------------------------------------------------------------
# cached per-mesh geometry and reference-element tables


class _Geometry:
    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        tri = mesh.triangles
        p = mesh.vertices[tri]  # (nt, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        self.areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if (self.areas <= 0).any():
            raise ValueError("mesh contains non-positive triangle areas")
        # grad of barycentric coordinate k: rotate opposite edge / (2A)
        g = np.empty((mesh.n_triangles, 3, 2))
        for k in range(3):
            a, b = (k + 1) % 3, (k + 2) % 3
            g[:, k, 0] = p[:, a, 1] - p[:, b, 1]
            g[:, k, 1] = p[:, b, 0] - p[:, a, 0]
        self.grad_lambda = g / (2.0 * self.areas)[:, None, None]
        self.tri = tri
        self._qp_cache: dict[int, dict] = {}

    def tables(self, degree: int) -> dict:
        """Reference/physical tables for the rule of the given degree."""
        if degree not in self._qp_cache:
            rule = quadrature_rule(degree)
            lam = rule.lam  # (nq, 3)
            w = rule.w
            bubble = BUBBLE_SCALE * lam[:, 0] * lam[:, 1] * lam[:, 2]  # (nq,)
            # d(bubble)/d(lambda_k) = 27 * product of the other two
            mu = BUBBLE_SCALE * np.stack(
                [lam[:, 1] * lam[:, 2], lam[:, 0] * lam[:, 2], lam[:, 0] * lam[:, 1]],
                axis=1,
            )  # (nq, 3)
            grad_bubble = np.einsum("qk,tkd->tqd", mu, self.grad_lambda)
            psi = np.concatenate([lam, bubble[:, None]], axis=1)  # (nq, 4)
            nt, nq = self.areas.size, lam.shape[0]
            grad_psi = np.empty((nt, nq, 4, 2))
            grad_psi[:, :, :3, :] = self.grad_lambda[:, None, :, :]
            grad_psi[:, :, 3, :] = grad_bubble
            # physical coordinates of quadrature points
            pv = self.mesh.vertices[self.tri]  # (nt, 3, 2)
            xq = np.einsum("qk,tkd->tqd", lam, pv)
            self._qp_cache[degree] = {
                "rule": rule,
                "lam": lam,
                "w": w,
                "phi": lam,  # P1 basis == barycentric coordinates
                "psi": psi,
                "grad_psi": grad_psi,
                "xq": xq,
                # combined 2*A*w factor for physical integration, (nt, nq)
                "jw": 2.0 * self.areas[:, None] * w[None, :],
                # precomputed basis outer products for weighted-mass assembly
                "phi_outer": np.einsum("qa,qb->qab", lam, lam),
                "psi_outer": np.einsum("qa,qb->qab", psi, psi),
            }
        return self._qp_cache[degree]


@lru_cache(maxsize=16)
def _geometry(mesh: TriMesh) -> _Geometry:
    return _Geometry(mesh)


class _Pattern:
    """Fixed triplet layout -> canonical CSR, with values filled per assembly.

    The scatter map from triplet slots to CSR data positions is computed once;
    each assembly then reduces to a single bincount.
    """

    def __init__(self, rows: np.ndarray, cols: np.ndarray, shape):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        order = np.lexsort((cols, rows))
        rs, cs = rows[order], cols[order]
        fresh = np.empty(rs.size, dtype=bool)
        fresh[0] = True
        fresh[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
        pos = np.cumsum(fresh) - 1
        self.slot = np.empty(rs.size, dtype=np.int64)
        self.slot[order] = pos
        self.indices = cs[fresh].astype(np.int32)
        self.nnz = int(self.indices.size)
        counts = np.bincount(rs[fresh], minlength=shape[0])
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.shape = tuple(shape)

    def build_data(self, values: np.ndarray) -> np.ndarray:
        """Canonical CSR data array for the given triplet values."""
        return np.bincount(self.slot, weights=values.ravel(), minlength=self.nnz)

    def build(self, values: np.ndarray) -> SparseMatrix:
        import scipy.sparse as sp

        data = self.build_data(values)
        a = sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)
        return a


@lru_cache(maxsize=16)
def _p1_pattern(mesh: TriMesh) -> _Pattern:
    geo = _geometry(mesh)
    rows = np.repeat(geo.tri, 3, axis=1)
    cols = np.tile(geo.tri, (1, 3))
    return _Pattern(rows, cols, (mesh.n_vertices, mesh.n_vertices))


@lru_cache(maxsize=16)
def _mini_full_pattern(mesh: TriMesh) -> _Pattern:
    """All four component blocks of a MINI x MINI operator, in block order
    (0,0), (1,1), (0,1), (1,0)."""
    geo = _geometry(mesh)
    layout = DofLayout.mini_velocity(mesh)
    dofs = [_mini_local_dofs(geo, c, layout) for c in range(2)]
    rows, cols = [], []
    for ci, cj in ((0, 0), (1, 1), (0, 1), (1, 0)):
        rows.append(np.repeat(dofs[ci], 4, axis=1).ravel())
        cols.append(np.tile(dofs[cj], (1, 4)).ravel())
    n = layout.dof_count
    return _Pattern(np.concatenate(rows), np.concatenate(cols), (n, n))


def _scatter_p1(geo: _Geometry, local: np.ndarray) -> SparseMatrix:
    return _p1_pattern(geo.mesh).build(local)


def _mini_local_dofs(geo: _Geometry, component: int, layout: DofLayout) -> np.ndarray:
    """(nt, 4) global dof indices of [3 vertex hats, bubble] for one component."""
    nt = geo.mesh.n_triangles
    off = component * layout.component_stride
    return np.concatenate(
        [off + geo.tri, (off + layout.n_vertices + np.arange(nt))[:, None]], axis=1
    )


# ---------------------------------------------------------------------------
# field evaluation helpers


def _coeff_at_qp(geo: _Geometry, tab: dict, coeff) -> np.ndarray:
    """Normalize a coefficient spec to values at quadrature points, (nt, nq)."""
    nt, nq = tab["jw"].shape
    if callable(coeff):
        xq = tab["xq"]
        return np.asarray(coeff(xq[..., 0], xq[..., 1]), dtype=float) * np.ones((nt, nq))
    arr = np.asarray(coeff, dtype=float)
    if arr.ndim == 0:
        return np.full((nt, nq), float(arr))
    if arr.shape == (nt,):
        return np.repeat(arr[:, None], nq, axis=1)
    if arr.shape == (geo.mesh.n_vertices,):
        return p1_values_at_qp(geo.mesh, arr, tab["rule"].degree)
    if arr.shape == (nt, nq):
        return arr
    raise ValueError(f"cannot interpret coefficient of shape {arr.shape}")


def p1_values_at_qp(mesh: TriMesh, coeffs: np.ndarray, degree: int = 4) -> np.ndarray:
    """Evaluate a P1 field at the quadrature points of the given rule, (nt, nq)."""
    geo = _geometry(mesh)
    tab = geo.tables(degree)
    return np.einsum("qk,tk->tq", tab["phi"], coeffs[geo.tri])


def p1_gradient_per_triangle(mesh: TriMesh, coeffs: np.ndarray) -> np.ndarray:
    """Constant gradient of a P1 field on each triangle, (nt, 2)."""
    geo = _geometry(mesh)
    return np.einsum("tk,tkd->td", coeffs[geo.tri], geo.grad_lambda)


def _mini_local_coeffs(geo: _Geometry, layout: DofLayout, u: np.ndarray, component: int):
    dofs = _mini_local_dofs(geo, component, layout)
    return u[dofs]  # (nt, 4)


def mini_values_at_qp(mesh: TriMesh, u: np.ndarray, degree: int = 4) -> np.ndarray:
    """Velocity components at quadrature points, (nt, nq, 2)."""
    geo = _geometry(mesh)
    layout = DofLayout.mini_velocity(mesh)
    tab = geo.tables(degree)
    out = np.empty(tab["jw"].shape + (2,))
    for c in range(2):
        loc = _mini_local_coeffs(geo, layout, u, c)
        out[..., c] = np.einsum("qa,ta->tq", tab["psi"], loc)
    return out


def mini_gradients_at_qp(mesh: TriMesh, u: np.ndarray, degree: int = 4) -> np.ndarray:
    """Velocity gradient tensor at quadrature points, (nt, nq, 2, 2) as [c, d] = d u_c / d x_d."""
    geo = _geometry(mesh)
    layout = DofLayout.mini_velocity(mesh)
    tab = geo.tables(degree)
    out = np.empty(tab["jw"].shape + (2, 2))
    for c in range(2):
        loc = _mini_local_coeffs(geo, layout, u, c)
        out[..., c, :] = np.einsum("tqad,ta->tqd", tab["grad_psi"], loc)
    return out


# ---------------------------------------------------------------------------
# scalar-space operators


def assemble_mass_p1(mesh: TriMesh) -> SparseMatrix:
    """P1 mass matrix, integrated exactly (degree-2 rule)."""
    geo = _geometry(mesh)
    tab = geo.tables(2)
    ref = np.einsum("q,qa,qb->ab", tab["w"], tab["phi"], tab["phi"])  # (3, 3)
    local = 2.0 * geo.areas[:, None, None] * ref[None, :, :]
    return _scatter_p1(geo, local)


def assemble_stiffness_p1(mesh: TriMesh, coeff=1.0) -> SparseMatrix:
    """P1 stiffness matrix with a nonnegative scalar diffusion coefficient.

    coeff may be a scalar, a per-triangle array, a P1 coefficient vector, a
    per-quadrature-point array, or a callable of (x, y).
    """
    geo = _geometry(mesh)
    tab = geo.tables(4 if not np.isscalar(coeff) else 2)
    cq = _coeff_at_qp(geo, tab, coeff)
    if (cq < 0).any():
        raise ValueError("diffusion coefficient must be nonnegative")
    # P1 gradients are constant per triangle, so only the coefficient mean enters
    ceff = (tab["jw"] * cq).sum(axis=1)  # (nt,) effective integral of coeff
    gg = np.einsum("tad,tbd->tab", geo.grad_lambda, geo.grad_lambda)
    local = ceff[:, None, None] * gg
    return _scatter_p1(geo, local)


def assemble_reaction_weighted_mass(mesh: TriMesh, weight) -> SparseMatrix:
    """Weighted P1 mass matrix, degree-4 rule; weight evaluated pointwise.

    weight may be a P1 coefficient vector, a (nt, nq) array of values at the
    degree-4 quadrature points, a per-triangle array, a scalar, or a callable.
    """
    geo = _geometry(mesh)
    tab = geo.tables(4)
    wq = _coeff_at_qp(geo, tab, weight)
    if not np.all(np.isfinite(wq)):
        bad = int(np.argwhere(~np.isfinite(wq).all(axis=1))[0, 0])
        raise FloatingPointError(f"non-finite reaction weight on element {bad}")
    local = np.einsum("tq,qab->tab", tab["jw"] * wq, tab["phi_outer"])
    return _scatter_p1(geo, local)


def assemble_scalar_convection(
    mesh: TriMesh, velocity: np.ndarray, gradient_source: np.ndarray
) -> np.ndarray:
    """Load vector b_i = integral of (U . grad C) phi_i, degree-4 rule.

    velocity lives on the MINI layout, gradient_source on the P1 layout.
    """
    layout = DofLayout.mini_velocity(mesh)
    if np.asarray(velocity).shape != (layout.dof_count,):
        raise ValueError(
            f"velocity must have {layout.dof_count} entries (MINI layout), "
            f"got {np.asarray(velocity).shape}"
        )
    if np.asarray(gradient_source).shape != (mesh.n_vertices,):
        raise ValueError("gradient_source must be a P1 coefficient vector")
    geo = _geometry(mesh)
    tab = geo.tables(4)
    uq = mini_values_at_qp(mesh, np.asarray(velocity, dtype=float), 4)
    gradc = p1_gradient_per_triangle(mesh, np.asarray(gradient_source, dtype=float))
    g = uq[..., 0] * gradc[:, None, 0] + uq[..., 1] * gradc[:, None, 1]  # (nt, nq)
    local = np.einsum("tq,qa->ta", tab["jw"] * g, tab["phi"])
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, geo.tri.ravel(), local.ravel())
    return out


# ---------------------------------------------------------------------------
# velocity-space operators


def _mini_pair_scatter(geo: _Geometry, layout: DofLayout, blocks) -> SparseMatrix:
    """Assemble a 2x2-component-block MINI matrix from local (nt, 4, 4) blocks.

    blocks[(ci, cj)] is the local matrix coupling row component ci with
    column component cj; missing pairs contribute nothing.
    """
    n = layout.dof_count
    rows, cols, vals = [], [], []
    dofs = {c: _mini_local_dofs(geo, c, layout) for c in range(2)}
    for (ci, cj), local in blocks.items():
        r = np.repeat(dofs[ci], 4, axis=1).ravel()
        c = np.tile(dofs[cj], (1, 4)).ravel()
        rows.append(r)
        cols.append(c)
        vals.append(local.ravel())
    return csr_from_triplets(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, n)
    )


def assemble_mini_mass(mesh: TriMesh) -> SparseMatrix:
    """Velocity mass matrix (block diagonal over components), degree-6 rule."""
    geo = _geometry(mesh)
    layout = DofLayout.mini_velocity(mesh)
    tab = geo.tables(6)
    ref = np.einsum("q,qa,qb->ab", tab["w"], tab["psi"], tab["psi"])  # (4, 4)
    local = 2.0 * geo.areas[:, None, None] * ref[None, :, :]
    return _mini_pair_scatter(geo, layout, {(0, 0): local, (1, 1): local})


def assemble_mini_stiffness(mesh: TriMesh, nu=1.0) -> SparseMatrix:
    """Velocity stiffness with viscosity field nu, degree-4 rule."""
    geo = _geometry(mesh)
    layout = DofLayout.mini_velocity(mesh)
    tab = geo.tables(4)
    nq = _coeff_at_qp(geo, tab, nu)
    if (nq <= 0).any():
        raise ValueError("viscosity must be positive")
    local = np.einsum("tq,tqad,tqbd->tab", tab["jw"] * nq, tab["grad_psi"], tab["grad_psi"])
    return _mini_pair_scatter(geo, layout, {(0, 0): local, (1, 1): local})


def _momentum_diag_local(mesh: TriMesh, nu_field, dt: float | None) -> np.ndarray:
    """Local diagonal-block contribution (1/dt) M + K(nu), shape (nt, 4, 4)."""
    geo = _geometry(mesh)
    tab4 = geo.tables(4)
    nq = _coeff_at_qp(geo, tab4, nu_field)
    if (nq <= 0).any():
        raise ValueError("viscosity must be positive")
    diag = np.einsum("tq,tqad,tqbd->tab", tab4["jw"] * nq, tab4["grad_psi"], tab4["grad_psi"])
    if dt is not None:
        tab6 = geo.tables(6)
        mass_ref = np.einsum("q,qab->ab", tab6["w"], tab6["psi_outer"])
        diag = diag + (2.0 / dt) * geo.areas[:, None, None] * mass_ref[None, :, :]
    return diag


def _momentum_values(mesh: TriMesh, diag_local: np.ndarray, lagged_velocity) -> np.ndarray:
    """Raveled pattern values of diag + N(lagged) in block order (0,0),(1,1),(0,1),(1,0)."""
    geo = _geometry(mesh)
    tab6 = geo.tables(6)
    grads = mini_gradients_at_qp(mesh, np.asarray(lagged_velocity, dtype=float), 6)
    pieces = []
    for ci, cj in ((0, 0), (1, 1), (0, 1), (1, 0)):
        n_loc = np.einsum("tq,qab->tab", tab6["jw"] * grads[..., ci, cj],
                          tab6["psi_outer"])
        pieces.append((n_loc + diag_local if ci == cj else n_loc).ravel())
    return np.concatenate(pieces)


def _momentum_local_blocks(mesh: TriMesh, nu_field, lagged_velocity, dt: float | None):
    """Local (nt, 4, 4) blocks of (1/dt) M + K(nu) + N(lagged), keyed (ci, cj)."""
    geo = _geometry(mesh)
    tab6 = geo.tables(6)
    diag = _momentum_diag_local(mesh, nu_field, dt)
    grads = mini_gradients_at_qp(mesh, np.asarray(lagged_velocity, dtype=float), 6)
    blocks = {}
    for ci in range(2):
        for cj in range(2):
            n_loc = np.einsum("tq,qab->tab", tab6["jw"] * grads[..., ci, cj],
                              tab6["psi_outer"])
            blocks[(ci, cj)] = n_loc + diag if ci == cj else n_loc
    return blocks


def _build_mini_from_blocks(mesh: TriMesh, blocks) -> SparseMatrix:
    pattern = _mini_full_pattern(mesh)
    vals = np.concatenate([blocks[key].ravel()
                           for key in ((0, 0), (1, 1), (0, 1), (1, 0))])
    return pattern.build(vals)


def assemble_mini_convection(mesh: TriMesh, lagged_velocity: np.ndarray) -> SparseMatrix:
    """Linearized advection N_ij = integral of (xi_j . grad) U_lag . xi_i.

    The unknown sits in the advecting slot; the lagged velocity supplies the
    advected gradient.  Block (ci, cj) is a weighted velocity mass matrix
    with weight d U_lag[ci] / d x[cj].
    """
    geo = _geometry(mesh)
    layout = DofLayout.mini_velocity(mesh)
    tab = geo.tables(6)
    grads = mini_gradients_at_qp(mesh, np.asarray(lagged_velocity, dtype=float), 6)
    blocks = {}
    for ci in range(2):
        for cj in range(2):
            wq = grads[..., ci, cj]
            blocks[(ci, cj)] = np.einsum("tq,qab->tab", tab["jw"] * wq, tab["psi_outer"])
    return _mini_pair_scatter(geo, layout, blocks)


def assemble_mini_momentum_block(
    mesh: TriMesh, nu_field, advecting_lag: np.ndarray, dt: float
) -> SparseMatrix:
    """Velocity block (1/dt) M + K(nu) + N(lagged velocity)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    blocks = _momentum_local_blocks(mesh, nu_field, advecting_lag, dt)
    return _build_mini_from_blocks(mesh, blocks)


def assemble_divergence_block(mesh: TriMesh) -> SparseMatrix:
    """Pressure-velocity coupling B[q, u] = integral of q * div(xi_u)."""
    geo = _geometry(mesh)
    layout = DofLayout.mini_velocity(mesh)
    tab = geo.tables(4)
    nv = mesh.n_vertices
    rows, cols, vals = [], [], []
    for c in range(2):
        dofs = _mini_local_dofs(geo, c, layout)  # (nt, 4)
        local = np.einsum(
            "tq,qa,tqb->tab", tab["jw"], tab["phi"], tab["grad_psi"][..., c]
        )  # (nt, 3, 4)
        rows.append(np.repeat(geo.tri, 4, axis=1).ravel())
        cols.append(np.tile(dofs, (1, 3)).ravel())
        vals.append(local.ravel())
    return csr_from_triplets(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
        (nv, layout.dof_count),
    )


def assemble_mini_load(mesh: TriMesh, force, t: float = 0.0) -> np.ndarray:
    """Load vector of a vector-valued forcing against the velocity basis."""
    geo = _geometry(mesh)
    layout = DofLayout.mini_velocity(mesh)
    tab = geo.tables(6)
    xq = tab["xq"]
    fx, fy = force(xq[..., 0], xq[..., 1], t)
    out = np.zeros(layout.dof_count)
    for c, fc in enumerate((fx, fy)):
        fc = np.asarray(fc, dtype=float) * np.ones(tab["jw"].shape)
        local = np.einsum("tq,qa->ta", tab["jw"] * fc, tab["psi"])
        np.add.at(out, _mini_local_dofs(geo, c, layout).ravel(), local.ravel())
    return out


def assemble_p1_load(mesh: TriMesh, fn, t: float | None = None, degree: int = 4) -> np.ndarray:
    """Load vector of a pointwise scalar function against the P1 basis."""
    geo = _geometry(mesh)
    tab = geo.tables(degree)
    xq = tab["xq"]
    vals = fn(xq[..., 0], xq[..., 1]) if t is None else fn(xq[..., 0], xq[..., 1], t)
    vals = np.asarray(vals, dtype=float) * np.ones(tab["jw"].shape)
    local = np.einsum("tq,qa->ta", tab["jw"] * vals, tab["phi"])
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, geo.tri.ravel(), local.ravel())
    return out


# ---------------------------------------------------------------------------
# boundary conditions and interpolation


def apply_dirichlet(
    a: SparseMatrix,
    b: np.ndarray,
    dofs,
    values=0.0,
    symmetric: bool = False,
) -> tuple[SparseMatrix, np.ndarray]:
    """Constrain dofs to values by row replacement; returns modified copies.

    With symmetric=True the constrained columns are lifted into the
    right-hand side as well (symmetric elimination).
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape).copy()
    order = np.argsort(dofs, kind="stable")
    ds, vs = dofs[order], values[order]
    dup = ds[1:] == ds[:-1]
    if dup.any():
        if not np.allclose(vs[1:][dup], vs[:-1][dup], rtol=0.0, atol=0.0):
            raise ValueError("duplicate Dirichlet dof with conflicting values")
        keep = np.concatenate([[True], ~dup])
        ds, vs = ds[keep], vs[keep]
    a = a.copy().tocsr()
    a.sort_indices()
    b = np.array(b, dtype=float)
    if ds.size == 0:
        return a, b
    if symmetric:
        lift = np.zeros(a.shape[1])
        lift[ds] = vs
        b -= a @ lift
        mask = np.isin(a.indices, ds)
        a.data[mask] = 0.0
    # zero the constrained rows, then write unit diagonals
    row_mask = np.zeros(a.shape[0], dtype=bool)
    row_mask[ds] = True
    a.data[np.repeat(row_mask, np.diff(a.indptr))] = 0.0
    for d in ds:
        lo, hi = a.indptr[d], a.indptr[d + 1]
        pos = lo + np.searchsorted(a.indices[lo:hi], d)
        if pos >= hi or a.indices[pos] != d:
            raise ValueError(f"constrained dof {d} has no stored diagonal entry")
        a.data[pos] = 1.0
    b[ds] = vs
    return a, b


def interpolate(expr, layout: DofLayout, mesh: TriMesh) -> np.ndarray:
    """Vertex interpolation of a pointwise expression onto a dof layout.

    Scalar layouts evaluate expr(x, y) at the vertices.  The velocity layout
    expects expr to return the two components; bubble dofs are set to zero
    (vertex interpolation convention).
    """
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    if layout.kind == MINI_VELOCITY:
        vals = expr(x, y)
        u1 = np.asarray(vals[0], dtype=float) * np.ones_like(x)
        u2 = np.asarray(vals[1], dtype=float) * np.ones_like(x)
        for name, comp in (("u1", u1), ("u2", u2)):
            if not np.all(np.isfinite(comp)):
                bad = int(np.argwhere(~np.isfinite(comp))[0, 0])
                raise FloatingPointError(
                    f"non-finite {name} at vertex {bad} {tuple(mesh.vertices[bad])}"
                )
        out = np.zeros(layout.dof_count)
        out[layout.vertex_dofs(0)] = u1
        out[layout.vertex_dofs(1)] = u2
        return out
    vals = np.asarray(expr(x, y), dtype=float) * np.ones_like(x)
    if not np.all(np.isfinite(vals)):
        bad = int(np.argwhere(~np.isfinite(vals))[0, 0])
        raise FloatingPointError(
            f"non-finite value at vertex {bad} {tuple(mesh.vertices[bad])}"
        )
    return vals


def boundary_dofs_scalar(mesh: TriMesh) -> np.ndarray:
    """Sorted boundary dof indices of a P1 scalar layout."""
    return np.array(sorted(boundary_vertex_set(mesh)), dtype=np.int64)


def boundary_dofs_velocity(mesh: TriMesh) -> np.ndarray:
    """Sorted boundary dof indices (both components) of the velocity layout."""
    layout = DofLayout.mini_velocity(mesh)
    bv = boundary_dofs_scalar(mesh)
    return np.concatenate([bv, bv + layout.component_stride])


# ---------------------------------------------------------------------------
# quadrature-consistent integrals and norms


def p1_integral_weights(mesh: TriMesh) -> np.ndarray:
    """Vector of integrals of the P1 basis functions (mass-matrix row sums)."""
    m = assemble_mass_p1(mesh)
    return np.asarray(m.sum(axis=1)).ravel()


def p1_l2_norm(mesh: TriMesh, coeffs: np.ndarray) -> float:
    m = assemble_mass_p1(mesh)
    return float(np.sqrt(max(coeffs @ (m @ coeffs), 0.0)))


def mini_l2_norm(mesh: TriMesh, u: np.ndarray) -> float:
    m = assemble_mini_mass(mesh)
    return float(np.sqrt(max(u @ (m @ u), 0.0)))


def mini_h1_seminorm(mesh: TriMesh, u: np.ndarray) -> float:
    k = assemble_mini_stiffness(mesh, 1.0)
    return float(np.sqrt(max(u @ (k @ u), 0.0)))
