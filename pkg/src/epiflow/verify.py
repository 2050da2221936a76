"""Independent oracles and convergence studies.

Three cross-checks live here: a Runge-Kutta oracle for the spatially
homogeneous reduction of the host/pathogen dynamics, manufactured-solution
convergence studies for the scalar transport operator and for the steady
viscous-flow saddle problem, and the per-step monitor record used by runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import assembly as fem
from .linalg import solve_direct
from .mesh import TriMesh, build_unit_square_mesh, mesh_size
from .model import ModelParams, eval_coefficient, safe_population


# ---------------------------------------------------------------------------
# spatially homogeneous oracle


@dataclass
class OdeState:
    s: float
    i: float
    r: float
    t: float = 0.0


@dataclass
class OdeTrajectory:
    times: np.ndarray
    s: np.ndarray
    i: np.ndarray
    r: np.ndarray


def sir_ode_rhs(params: ModelParams, s: float, i: float, r: float) -> np.ndarray:
    beta0 = eval_coefficient(params.beta_spec, 0.0)
    n = safe_population(s, i, r, params.n_floor)
    infection = beta0 * s * i / n
    return np.array([
        params.Lambda - infection - params.eta * s,
        infection - (params.gamma + params.eta) * i,
        params.gamma * i - params.eta * r,
    ])


def sir_ode_oracle(params: ModelParams, y0: OdeState, t_final: float,
                   dt_ode: float) -> OdeTrajectory:
    """Classical RK4 trajectory of the homogeneous host dynamics.

    Requires a constant transmission law (the pathogen is decoupled in the
    homogeneous reduction, which forces alpha = 0 and C = 0).
    """
    if params.beta_spec.kind != "constant":
        raise ValueError("the homogeneous oracle requires a constant transmission law")
    if dt_ode <= 0:
        raise ValueError("dt_ode must be positive")
    n = int(round((t_final - y0.t) / dt_ode))
    y = np.array([y0.s, y0.i, y0.r], dtype=float)
    out = np.empty((n + 1, 3))
    out[0] = y
    f = lambda v: sir_ode_rhs(params, *v)
    for k in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * dt_ode * k1)
        k3 = f(y + 0.5 * dt_ode * k2)
        k4 = f(y + dt_ode * k3)
        y = y + (dt_ode / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y
    times = y0.t + dt_ode * np.arange(n + 1)
    return OdeTrajectory(times=times, s=out[:, 0], i=out[:, 1], r=out[:, 2])


@dataclass
class OdeComparison:
    max_deviation: float
    per_compartment: dict


def compare_pde_to_ode(pde_run, ode_run: OdeTrajectory, area: float) -> OdeComparison:
    """Max relative deviation of spatial means from the oracle, per compartment.

    The PDE monitor times must all exist on the oracle time grid.
    """
    dt_ode = float(ode_run.times[1] - ode_run.times[0])
    per = {}
    rows = pde_run.monitors
    times = np.array([row.t for row in rows])
    idx = np.round((times - ode_run.times[0]) / dt_ode).astype(int)
    if (idx < 0).any() or (idx >= ode_run.times.size).any() or \
            np.abs(ode_run.times[idx] - times).max() > 1e-9:
        raise ValueError("PDE monitor times do not lie on the oracle time grid")
    for name, attr in (("s", "int_s"), ("i", "int_i"), ("r", "int_r")):
        means = np.array([getattr(row, attr) for row in rows]) / area
        ode_vals = getattr(ode_run, name)[idx]
        per[name] = float(np.max(np.abs(means - ode_vals) / np.maximum(ode_vals, 1e-12)))
    return OdeComparison(max_deviation=max(per.values()), per_compartment=per)


# ---------------------------------------------------------------------------
# convergence tables


@dataclass
class ConvergenceTable:
    """Errors per mesh size with observed rates log2(e(h) / e(h/2))."""

    columns: tuple
    hs: list
    errors: dict

    @classmethod
    def empty(cls, columns) -> "ConvergenceTable":
        return cls(tuple(columns), [], {c: [] for c in columns})

    def add_row(self, h: float, **errs) -> None:
        if self.hs and h >= self.hs[-1]:
            raise ValueError("mesh sizes must be strictly decreasing")
        self.hs.append(float(h))
        for c in self.columns:
            self.errors[c].append(float(errs[c]))

    def rates(self, column: str) -> list:
        e, h = self.errors[column], self.hs
        out = [float("nan")]
        for k in range(1, len(e)):
            if e[k] == 0 or e[k - 1] == 0:
                out.append(float("inf"))
            else:
                out.append(np.log2(e[k - 1] / e[k]) / np.log2(h[k - 1] / h[k]))
        return out

    def format(self) -> str:
        head = ["h".rjust(12)]
        for c in self.columns:
            head.append(c.rjust(12))
            head.append(("rate_" + c).rjust(10))
        lines = ["".join(head)]
        all_rates = {c: self.rates(c) for c in self.columns}
        for k, h in enumerate(self.hs):
            cells = [f"{h:12.5e}"]
            for c in self.columns:
                cells.append(f"{self.errors[c][k]:12.5e}")
                r = all_rates[c][k]
                cells.append("         -" if np.isnan(r) else f"{r:10.3f}")
            lines.append("".join(cells))
        return "\n".join(lines)

    def to_csv(self) -> str:
        cols = ["h"]
        for c in self.columns:
            cols += [c, "rate_" + c]
        lines = [",".join(cols)]
        all_rates = {c: self.rates(c) for c in self.columns}
        for k, h in enumerate(self.hs):
            cells = [f"{h:.17g}"]
            for c in self.columns:
                cells.append(f"{self.errors[c][k]:.17g}")
                cells.append(f"{all_rates[c][k]:.17g}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# manufactured solutions: scalar transport


@dataclass(frozen=True)
class ManufacturedScalar:
    """Exact solution and matching forcing for d_t u + U.grad u - D lap u + lam u = g."""

    value: object  # (x, y, t) -> u
    grad: object  # (x, y, t) -> (ux, uy)
    forcing: object  # (x, y, t) -> g
    velocity: object = None  # steady (x, y) -> (u1, u2), or None
    diffusion: float = 1.0
    decay: float = 0.0
    steady: bool = False


def decaying_sine_case(diffusion: float, decay: float, advected: bool) -> ManufacturedScalar:
    """u = exp(-t) sin(pi x) sin(pi y), optionally advected by the standard vortex."""
    from .model import _vortex

    pi = np.pi

    def value(x, y, t):
        return np.exp(-t) * np.sin(pi * x) * np.sin(pi * y)

    def grad(x, y, t):
        e = np.exp(-t)
        return (e * pi * np.cos(pi * x) * np.sin(pi * y),
                e * pi * np.sin(pi * x) * np.cos(pi * y))

    vel = _vortex if advected else None

    def forcing(x, y, t):
        u = value(x, y, t)
        g = -u + diffusion * 2.0 * pi * pi * u + decay * u
        if advected:
            u1, u2 = vel(x, y)
            gx, gy = grad(x, y, t)
            g = g + u1 * gx + u2 * gy
        return g

    return ManufacturedScalar(value, grad, forcing, vel, diffusion, decay, steady=False)


def steady_sine_case(diffusion: float = 1.0) -> ManufacturedScalar:
    """Steady u = sin(pi x) sin(pi y) with -D lap u = g and zero boundary."""
    pi = np.pi
    value = lambda x, y, t=0.0: np.sin(pi * x) * np.sin(pi * y)
    grad = lambda x, y, t=0.0: (pi * np.cos(pi * x) * np.sin(pi * y),
                                pi * np.sin(pi * x) * np.cos(pi * y))
    forcing = lambda x, y, t=0.0: diffusion * 2.0 * pi * pi * value(x, y)
    return ManufacturedScalar(value, grad, forcing, None, diffusion, 0.0, steady=True)


def scalar_errors(mesh: TriMesh, coeffs: np.ndarray, case: ManufacturedScalar,
                  t: float) -> tuple[float, float]:
    """L2 and H1-seminorm errors of a P1 field against the exact solution."""
    geo = fem._geometry(mesh)
    tab = geo.tables(6)
    xq = tab["xq"]
    uh = fem.p1_values_at_qp(mesh, coeffs, 6)
    diff = uh - case.value(xq[..., 0], xq[..., 1], t)
    el2 = float(np.sqrt((tab["jw"] * diff**2).sum()))
    gh = fem.p1_gradient_per_triangle(mesh, coeffs)
    gx, gy = case.grad(xq[..., 0], xq[..., 1], t)
    d2 = (gh[:, None, 0] - gx) ** 2 + (gh[:, None, 1] - gy) ** 2
    eh1 = float(np.sqrt((tab["jw"] * d2).sum()))
    return el2, eh1


def mms_scalar_study(case: ManufacturedScalar, cell_counts, t_final: float = 0.25,
                     dt_scale: float = 1.0) -> ConvergenceTable:
    """Transport-operator convergence study over a sequence of meshes.

    Transient cases step backward Euler with the advection load lagged, with
    dt = dt_scale * h^2 so that the first-order time error does not mask the
    second-order spatial rate.
    """
    table = ConvergenceTable.empty(("l2", "h1"))
    for n in cell_counts:
        mesh = build_unit_square_mesh(n, n)
        h = mesh_size(mesh)
        bdofs = fem.boundary_dofs_scalar(mesh)
        if case.steady:
            k = fem.assemble_stiffness_p1(mesh, case.diffusion)
            b = fem.assemble_p1_load(mesh, lambda x, y: case.forcing(x, y, 0.0))
            a, b = fem.apply_dirichlet(k, b, bdofs, 0.0)
            u = solve_direct(a, b)
            el2, eh1 = scalar_errors(mesh, u, case, 0.0)
        else:
            dx = 1.0 / n
            dt = dt_scale * dx * dx
            n_steps = max(1, int(round(t_final / dt)))
            dt = t_final / n_steps
            m = fem.assemble_mass_p1(mesh)
            k = fem.assemble_stiffness_p1(mesh, case.diffusion)
            a = m * (1.0 / dt) + k + m * case.decay
            a, _ = fem.apply_dirichlet(a, np.zeros(mesh.n_vertices), bdofs, 0.0)
            import scipy.sparse.linalg as spla

            factor = spla.splu(a.tocsc())
            p1 = fem.DofLayout.p1_scalar(mesh)
            u = fem.interpolate(lambda x, y: case.value(x, y, 0.0), p1, mesh)
            u_mini = None
            if case.velocity is not None:
                mini = fem.DofLayout.mini_velocity(mesh)
                u_mini = fem.interpolate(case.velocity, mini, mesh)
            t = 0.0
            for _ in range(n_steps):
                t_new = t + dt
                b = (m @ u) / dt + fem.assemble_p1_load(
                    mesh, lambda x, y: case.forcing(x, y, t_new))
                if u_mini is not None:
                    b = b - fem.assemble_scalar_convection(mesh, u_mini, u)
                b[bdofs] = 0.0
                u = factor.solve(b)
                t = t_new
            el2, eh1 = scalar_errors(mesh, u, case, t)
        table.add_row(h, l2=el2, h1=eh1)
    return table


# ---------------------------------------------------------------------------
# manufactured solutions: steady viscous flow


@dataclass(frozen=True)
class ManufacturedStokes:
    velocity: object  # (x, y) -> (u1, u2), divergence-free with zero trace
    grad_velocity: object  # (x, y) -> ((u1x, u1y), (u2x, u2y))
    pressure: object  # (x, y) -> p, zero mean
    viscosity: object  # (x, y) -> nu, or a float
    forcing: object  # (x, y) -> (f1, f2)


def vortex_stokes_case(nu0: float = 0.1, variable_viscosity: bool = False) -> ManufacturedStokes:
    """The standard vortex as a steady flow solution with hand-derived forcing.

    u1 = (1 - cos 2 pi x) sin 2 pi y / 4, u2 = -(1 - cos 2 pi y) sin 2 pi x / 4,
    p = sin 2 pi x sin 2 pi y.  For the variable case nu = nu0 (1 + sin(pi x)
    sin(pi y) / 2).
    """
    pi = np.pi

    def velocity(x, y):
        return ((1 - np.cos(2 * pi * x)) * np.sin(2 * pi * y) / 4.0,
                -(1 - np.cos(2 * pi * y)) * np.sin(2 * pi * x) / 4.0)

    def grad_velocity(x, y):
        s2x, c2x = np.sin(2 * pi * x), np.cos(2 * pi * x)
        s2y, c2y = np.sin(2 * pi * y), np.cos(2 * pi * y)
        u1x = (pi / 2) * s2x * s2y
        u1y = (pi / 2) * (1 - c2x) * c2y
        u2x = -(pi / 2) * (1 - c2y) * c2x
        u2y = -(pi / 2) * s2x * s2y
        return ((u1x, u1y), (u2x, u2y))

    pressure = lambda x, y: np.sin(2 * pi * x) * np.sin(2 * pi * y)

    def laplacian(x, y):
        s2x, c2x = np.sin(2 * pi * x), np.cos(2 * pi * x)
        s2y, c2y = np.sin(2 * pi * y), np.cos(2 * pi * y)
        return (pi * pi * s2y * (2 * c2x - 1), -pi * pi * s2x * (2 * c2y - 1))

    if variable_viscosity:
        viscosity = lambda x, y: nu0 * (1.0 + 0.5 * np.sin(pi * x) * np.sin(pi * y))

        def grad_viscosity(x, y):
            return (0.5 * nu0 * pi * np.cos(pi * x) * np.sin(pi * y),
                    0.5 * nu0 * pi * np.sin(pi * x) * np.cos(pi * y))
    else:
        viscosity = lambda x, y: nu0 * np.ones_like(np.asarray(x, dtype=float))
        grad_viscosity = lambda x, y: (np.zeros_like(np.asarray(x, dtype=float)),) * 2

    def forcing(x, y):
        lap1, lap2 = laplacian(x, y)
        (u1x, u1y), (u2x, u2y) = grad_velocity(x, y)
        nx, ny = grad_viscosity(x, y)
        nu = viscosity(x, y)
        px = 2 * pi * np.cos(2 * pi * x) * np.sin(2 * pi * y)
        py = 2 * pi * np.sin(2 * pi * x) * np.cos(2 * pi * y)
        f1 = -(nu * lap1 + nx * u1x + ny * u1y) + px
        f2 = -(nu * lap2 + nx * u2x + ny * u2y) + py
        return f1, f2

    return ManufacturedStokes(velocity, grad_velocity, pressure, viscosity, forcing)


def stokes_errors(mesh: TriMesh, u: np.ndarray, p: np.ndarray,
                  case: ManufacturedStokes) -> tuple[float, float, float]:
    """(velocity L2, velocity H1-seminorm, pressure L2) errors."""
    geo = fem._geometry(mesh)
    tab = geo.tables(6)
    xq = tab["xq"]
    uh = fem.mini_values_at_qp(mesh, u, 6)
    u1, u2 = case.velocity(xq[..., 0], xq[..., 1])
    e2 = (uh[..., 0] - u1) ** 2 + (uh[..., 1] - u2) ** 2
    el2 = float(np.sqrt((tab["jw"] * e2).sum()))
    gh = fem.mini_gradients_at_qp(mesh, u, 6)
    (u1x, u1y), (u2x, u2y) = case.grad_velocity(xq[..., 0], xq[..., 1])
    d2 = ((gh[..., 0, 0] - u1x) ** 2 + (gh[..., 0, 1] - u1y) ** 2
          + (gh[..., 1, 0] - u2x) ** 2 + (gh[..., 1, 1] - u2y) ** 2)
    eh1 = float(np.sqrt((tab["jw"] * d2).sum()))
    ph = fem.p1_values_at_qp(mesh, p, 6)
    dp = ph - case.pressure(xq[..., 0], xq[..., 1])
    epl2 = float(np.sqrt((tab["jw"] * dp**2).sum()))
    return el2, eh1, epl2


def solve_stokes(mesh: TriMesh, case: ManufacturedStokes) -> tuple[np.ndarray, np.ndarray]:
    """Steady viscous saddle solve with pinned-then-recentered pressure."""
    nv = mesh.n_vertices
    k = fem.assemble_mini_stiffness(mesh, lambda x, y: case.viscosity(x, y))
    b_div = fem.assemble_divergence_block(mesh)
    zero_pp = sp.csr_matrix((np.zeros(nv), (np.arange(nv), np.arange(nv))), shape=(nv, nv))
    saddle = sp.bmat([[k, (-b_div.T).tocsr()], [b_div, zero_pp]], format="csr")
    rhs = np.concatenate([
        fem.assemble_mini_load(mesh, lambda x, y, t: case.forcing(x, y)),
        np.zeros(nv),
    ])
    n_u = fem.DofLayout.mini_velocity(mesh).dof_count
    constrained = np.concatenate([fem.boundary_dofs_velocity(mesh), [n_u]])
    saddle, rhs = fem.apply_dirichlet(saddle, rhs, constrained, 0.0)
    sol = solve_direct(saddle, rhs)
    u, p = sol[:n_u], sol[n_u:]
    w = fem.p1_integral_weights(mesh)
    p = p - (w @ p) / w.sum()
    return u, p


def mms_stokes_study(case: ManufacturedStokes, cell_counts) -> ConvergenceTable:
    table = ConvergenceTable.empty(("vel_l2", "vel_h1", "p_l2"))
    for n in cell_counts:
        mesh = build_unit_square_mesh(n, n)
        u, p = solve_stokes(mesh, case)
        el2, eh1, epl2 = stokes_errors(mesh, u, p, case)
        table.add_row(mesh_size(mesh), vel_l2=el2, vel_h1=eh1, p_l2=epl2)
    return table


# ---------------------------------------------------------------------------
# monitors


@dataclass
class MonitorRecord:
    t: float
    min_s: float
    max_s: float
    min_i: float
    max_i: float
    min_r: float
    max_r: float
    min_c: float
    max_c: float
    int_s: float
    int_i: float
    int_r: float
    int_c: float
    int_n: float
    l2_u: float
    h1_u: float
    div_res: float
    picard_iters: int
    linf_u: float = 0.0  # not part of the CSV surface


def monitor_row(state, disc, picard_iters: int = 0) -> MonitorRecord:
    """Nodal extrema, quadrature-consistent integrals, and flow norms of a state."""
    s, i, r, c = state.s, state.i, state.r, state.c
    int_s, int_i, int_r, int_c = (disc.integral(v) for v in (s, i, r, c))
    return MonitorRecord(
        t=float(state.t),
        min_s=float(s.min()), max_s=float(s.max()),
        min_i=float(i.min()), max_i=float(i.max()),
        min_r=float(r.min()), max_r=float(r.max()),
        min_c=float(c.min()), max_c=float(c.max()),
        int_s=int_s, int_i=int_i, int_r=int_r, int_c=int_c,
        int_n=int_s + int_i + int_r,
        l2_u=disc.velocity_l2(state.u),
        h1_u=disc.velocity_h1(state.u),
        div_res=disc.divergence_residual(state.u),
        picard_iters=int(picard_iters),
        linf_u=float(np.abs(state.u).max()) if state.u.size else 0.0,
    )
