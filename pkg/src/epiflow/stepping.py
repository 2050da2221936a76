"""Semi-implicit time stepping for the coupled flow / pathogen / host system.

One step advances all fields from t to t + dt through an inner fixed-point
iteration with lagged nonlinear coefficients:

  (1) momentum + continuity solve for velocity and pressure, with viscosity
      evaluated at the lagged pathogen iterate and the unknown velocity in
      the advecting slot of the linearized convection term;
  (2) implicit solves for the three host compartments with the infection
      quotient lagged ("S" carries +beta(C) I/N, "I" carries -beta(C) S/N
      plus recovery and mortality mass, "R" a lagged recovery source);
  (3) implicit pathogen solve with decay and diffusion, shedding source from
      the fresh infected field, and an explicit advection load built from
      the fresh velocity and the lagged pathogen gradient.

In single_sweep mode exactly one pass runs per step; in to_convergence mode
the passes repeat until the largest relative field update drops below the
tolerance, which is what makes the discrete population balance exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import assembly as fem
from .linalg import SingularMatrixError, solve_direct, solve_gmres
from .mesh import TriMesh
from .model import ModelParams, eval_coefficient, safe_population, validate

SINGLE_SWEEP = "single_sweep"
TO_CONVERGENCE = "to_convergence"


class StepError(RuntimeError):
    def __init__(self, subsystem: str, message: str, step_index: int | None = None):
        self.subsystem = subsystem
        self.step_index = step_index
        super().__init__(f"[{subsystem}] {message}")


@dataclass
class State:
    """Coefficient vectors of all fields at one time level."""

    t: float
    u: np.ndarray  # velocity, MINI layout (both components)
    p: np.ndarray  # pressure, P1
    c: np.ndarray  # pathogen, P1
    s: np.ndarray  # susceptible, P1
    i: np.ndarray  # infected, P1
    r: np.ndarray  # recovered, P1

    def copy(self) -> "State":
        return State(self.t, self.u.copy(), self.p.copy(), self.c.copy(),
                     self.s.copy(), self.i.copy(), self.r.copy())


@dataclass(frozen=True)
class StepControls:
    """Time step, inner-iteration policy, and scheme switches."""

    dt: float = 0.01
    picard_mode: str = TO_CONVERGENCE
    picard_tol: float = 1e-8
    picard_max: int = 50
    fluid_enabled: bool = True
    sir_frozen: bool = False
    momentum_convection: bool = True
    artificial_diffusion: bool = False
    clip_negative: bool = False
    solver: str = "direct"  # "direct" | "gmres" (scalar subsystems only)
    gmres_tol: float = 1e-10
    gmres_restart: int = 50
    gmres_max_iters: int = 2000

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.picard_tol <= 0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max < 1:
            raise ValueError("picard_max must be >= 1")
        if self.picard_mode not in (SINGLE_SWEEP, TO_CONVERGENCE):
            raise ValueError(f"unknown picard_mode {self.picard_mode!r}")
        if self.solver not in ("direct", "gmres"):
            raise ValueError(f"unknown solver {self.solver!r}")

    def with_(self, **kw) -> "StepControls":
        return replace(self, **kw)


@dataclass
class StepReport:
    picard_iters: int
    converged: bool
    max_update: float
    div_inf: float


def fatal_violations(params: ModelParams) -> list[str]:
    """Parameter violations that make stepping meaningless (boundedness warnings pass)."""
    return [v for v in validate(params) if "unbounded" not in v]


class Discretization:
    """Layouts and constant operators for one mesh, shared by steppers and monitors."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        self.p1 = fem.DofLayout.p1_scalar(mesh)
        self.mini = fem.DofLayout.mini_velocity(mesh)
        self.pressure = fem.DofLayout.p1_pressure(mesh)
        self.mass = fem.assemble_mass_p1(mesh)
        self.stiffness = fem.assemble_stiffness_p1(mesh, 1.0)
        self.mini_mass = fem.assemble_mini_mass(mesh)
        self.mini_stiffness_unit = fem.assemble_mini_stiffness(mesh, 1.0)
        self.divergence = fem.assemble_divergence_block(mesh)
        self.weights = np.asarray(self.mass.sum(axis=1)).ravel()  # integral of each hat
        self.area = float(self.weights.sum())
        self.scalar_bdofs = fem.boundary_dofs_scalar(mesh)
        self.velocity_bdofs = fem.boundary_dofs_velocity(mesh)
        self.n_velocity = self.mini.dof_count
        self.n_pressure = self.pressure.dof_count

    def integral(self, coeffs: np.ndarray) -> float:
        return float(self.weights @ coeffs)

    def l2(self, coeffs: np.ndarray) -> float:
        return float(np.sqrt(max(coeffs @ (self.mass @ coeffs), 0.0)))

    def velocity_l2(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(u @ (self.mini_mass @ u), 0.0)))

    def velocity_h1(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(u @ (self.mini_stiffness_unit @ u), 0.0)))

    def divergence_residual(self, u: np.ndarray) -> float:
        return float(np.abs(self.divergence @ u).max()) if u.size else 0.0


def _rel_update(new: np.ndarray, old: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(old)), 1e-14)
    return float(np.linalg.norm(new - old)) / denom


class _ReusableFactorSolver:
    """Direct solver that recycles its LU factor across nearby systems.

    The factor from an earlier matrix preconditions GMRES for subsequent
    solves; whenever the true residual misses the direct-solve contract
    (1e-10 relative) within a few Krylov iterations, the matrix is
    refactorized.  Solutions therefore always meet the direct contract.
    """

    def __init__(self, subsystem: str, max_krylov: int = 30):
        self.subsystem = subsystem
        self.max_krylov = max_krylov
        self._factor = None
        self.refactor_count = 0

    def _refactor(self, a):
        import scipy.sparse.linalg as spla

        try:
            self._factor = spla.splu(a.tocsc())
        except RuntimeError as exc:
            raise StepError(self.subsystem, f"factorization failed: {exc}") from exc
        self.refactor_count += 1

    def solve(self, a, b: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
        import scipy.sparse.linalg as spla

        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            return np.zeros_like(b)
        if self._factor is not None:
            m = spla.LinearOperator(a.shape, matvec=self._factor.solve)
            x, _info = spla.gmres(a, b, x0=x0, rtol=1e-12, atol=0.0,
                                  restart=self.max_krylov, maxiter=1, M=m)
            if np.all(np.isfinite(x)) and \
                    np.linalg.norm(a @ x - b) <= 1e-10 * bnorm:
                return x
        self._refactor(a)
        x = self._factor.solve(b)
        res = np.linalg.norm(a @ x - b)
        if not np.all(np.isfinite(x)):
            raise StepError(self.subsystem, "non-finite solution from sparse LU")
        if res > 1e-10 * bnorm:
            x = x + self._factor.solve(b - a @ x)
            res = np.linalg.norm(a @ x - b)
            if res > 1e-10 * bnorm:
                raise StepError(
                    self.subsystem,
                    f"direct solve residual {res / bnorm:.3e} exceeds contract 1e-10",
                )
        return x


class _SaddleTemplate:
    """Fixed-structure saddle matrix with per-iteration velocity-block values.

    The divergence blocks, the zero pressure diagonal, and the Dirichlet row
    replacement never change, so they are baked into a template; building the
    system for a new velocity block is a data copy plus two scatters.
    """

    def __init__(self, disc: "Discretization", constrained: np.ndarray):
        pattern = fem._mini_full_pattern(disc.mesh)
        self._pattern = pattern
        n_u, npr = disc.n_velocity, disc.n_pressure
        marker = sp.csr_matrix(
            (np.arange(1, pattern.nnz + 1, dtype=float),
             pattern.indices.copy(), pattern.indptr.copy()), shape=(n_u, n_u))
        a_zero = marker.copy()
        a_zero.data = np.zeros_like(a_zero.data)
        neg_bt = (-disc.divergence.T).tocsr()
        neg_bt.sort_indices()
        bt_zero = neg_bt.copy()
        bt_zero.data = np.zeros_like(bt_zero.data)
        b = disc.divergence
        b_zero = b.copy()
        b_zero.data = np.zeros_like(b_zero.data)
        z = sp.csr_matrix((np.zeros(npr), (np.arange(npr), np.arange(npr))),
                          shape=(npr, npr))
        marked = sp.bmat([[marker, bt_zero], [b_zero, z]], format="csr")
        base = sp.bmat([[a_zero, neg_bt], [b, z]], format="csr")
        pos = np.nonzero(marked.data)[0]
        idx = marked.data[pos].astype(np.int64) - 1
        self._amap = np.empty(pattern.nnz, dtype=np.int64)
        self._amap[idx] = pos
        self._base_data = base.data
        self._indices, self._indptr = base.indices, base.indptr
        self._shape = base.shape
        # positions of all entries in constrained rows, and of their diagonals
        spans = [np.arange(self._indptr[d], self._indptr[d + 1]) for d in constrained]
        self._row_positions = np.concatenate(spans)
        diag_pos = []
        for d in constrained:
            lo, hi = self._indptr[d], self._indptr[d + 1]
            k = lo + np.searchsorted(self._indices[lo:hi], d)
            assert k < hi and self._indices[k] == d, "missing diagonal in constrained row"
            diag_pos.append(k)
        self._diag_positions = np.array(diag_pos, dtype=np.int64)

    def build(self, a_triplet_values: np.ndarray) -> sp.csr_matrix:
        data = self._base_data.copy()
        data[self._amap] = self._pattern.build_data(a_triplet_values)
        data[self._row_positions] = 0.0
        data[self._diag_positions] = 1.0
        return sp.csr_matrix((data, self._indices, self._indptr), shape=self._shape)


class Stepper:
    """Precomputed implicit operators for repeated steps at fixed controls."""

    def __init__(self, disc: Discretization, params: ModelParams, controls: StepControls):
        bad = fatal_violations(params)
        if bad:
            raise ValueError("invalid model parameters: " + "; ".join(bad))
        self.disc = disc
        self.params = params
        self.controls = controls
        d, p, dt = disc, params, controls.dt
        m, k = d.mass, d.stiffness
        self._m_over_dt = m * (1.0 / dt)
        self._a_s_base = self._m_over_dt + k * p.D_S + m * p.eta
        self._a_i_base = self._m_over_dt + k * p.D_I + m * (p.eta + p.gamma)
        a_r = self._m_over_dt + k * p.D_R + m * p.eta
        self._a_r_factor = self._factorize(a_r, "recovered")
        self._a_c_raw = self._m_over_dt + k * p.D_C + m * p.lam
        if not controls.artificial_diffusion:
            a_c, _ = fem.apply_dirichlet(self._a_c_raw, np.zeros(d.n_pressure),
                                         d.scalar_bdofs, 0.0)
            self._a_c_factor = self._factorize(a_c, "pathogen")
        else:
            self._a_c_factor = None
        self._lambda_load = p.Lambda * d.weights
        self._mini_mass_over_dt = d.mini_mass * (1.0 / dt)
        self._pressure_pin = d.n_velocity  # global index of the pinned pressure dof
        self._saddle_bdofs = np.concatenate([d.velocity_bdofs, [self._pressure_pin]])
        # structural zeros on the pressure diagonal keep row replacement cheap
        npr = d.n_pressure
        self._pressure_zero_block = sp.csr_matrix(
            (np.zeros(npr), (np.arange(npr), np.arange(npr))), shape=(npr, npr)
        )
        self._neg_div_t = (-d.divergence.T).tocsr()
        self._saddle_template = _SaddleTemplate(d, self._saddle_bdofs) \
            if controls.fluid_enabled else None
        # the diffusive diagonal block is constant unless viscosity tracks C
        self._diag_local_const = (
            fem._momentum_diag_local(d.mesh, p.nu_spec.c0, dt)
            if controls.fluid_enabled and p.nu_spec.kind == "constant" else None
        )
        # lagged-factor solvers: systems drift slowly between inner iterations
        # and steps, so a stale LU preconditions GMRES until it goes stale
        self._saddle_solver = _ReusableFactorSolver("momentum")
        self._s_solver = _ReusableFactorSolver("susceptible")
        self._i_solver = _ReusableFactorSolver("infected")

    @staticmethod
    def _factorize(a, subsystem: str):
        import scipy.sparse.linalg as spla

        try:
            return spla.splu(a.tocsc())
        except RuntimeError as exc:
            raise StepError(subsystem, f"factorization failed: {exc}") from exc

    def _solve_scalar(self, a, b, subsystem: str) -> np.ndarray:
        try:
            if self.controls.solver == "gmres":
                x, rep = solve_gmres(
                    a, b, tol=self.controls.gmres_tol,
                    restart=self.controls.gmres_restart,
                    max_iters=self.controls.gmres_max_iters,
                    preconditioner="ilu0",
                )
                if not rep.converged:
                    raise StepError(subsystem, f"gmres stalled at residual {rep.residual:.3e}")
                return x
            return solve_direct(a, b)
        except SingularMatrixError as exc:
            raise StepError(subsystem, str(exc)) from exc

    # -- stage solves --------------------------------------------------------

    def _momentum_solve(self, uk, pk, ck, un, t_new):
        d, p, c = self.disc, self.params, self.controls
        if self._diag_local_const is not None:
            diag = self._diag_local_const
        else:
            nu_q = eval_coefficient(p.nu_spec, fem.p1_values_at_qp(d.mesh, ck, 4))
            diag = fem._momentum_diag_local(d.mesh, nu_q, c.dt)
        lag = uk if c.momentum_convection else np.zeros_like(uk)
        a_values = fem._momentum_values(d.mesh, diag, lag)
        saddle = self._saddle_template.build(a_values)
        rhs_u = self._mini_mass_over_dt @ un
        if p.forcing is not None:
            rhs_u = rhs_u + fem.assemble_mini_load(d.mesh, p.forcing, t_new)
        rhs = np.concatenate([rhs_u, np.zeros(d.n_pressure)])
        rhs[self._saddle_bdofs] = 0.0
        x0 = np.concatenate([uk, pk])
        sol = self._saddle_solver.solve(saddle, rhs, x0=x0)
        u_new = sol[: d.n_velocity]
        p_new = sol[d.n_velocity:]
        p_new = p_new - d.integral(p_new) / d.area
        return u_new, p_new

    def _host_solves(self, ck, sk, ik, rk, sn, in_, rn):
        d, p = self.disc, self.params
        mesh = d.mesh
        cq = fem.p1_values_at_qp(mesh, ck, 4)
        sq = fem.p1_values_at_qp(mesh, sk, 4)
        iq = fem.p1_values_at_qp(mesh, ik, 4)
        rq = fem.p1_values_at_qp(mesh, rk, 4)
        nq = safe_population(sq, iq, rq, p.n_floor)
        beta_q = eval_coefficient(p.beta_spec, cq)
        w_s = fem.assemble_reaction_weighted_mass(mesh, beta_q * iq / nq)
        w_i = fem.assemble_reaction_weighted_mass(mesh, beta_q * sq / nq)
        b_s = self._m_over_dt @ sn + self._lambda_load
        b_i = self._m_over_dt @ in_
        if self.controls.solver == "gmres":
            s_new = self._solve_scalar(self._a_s_base + w_s, b_s, "susceptible")
            i_new = self._solve_scalar(self._a_i_base - w_i, b_i, "infected")
        else:
            s_new = self._s_solver.solve(self._a_s_base + w_s, b_s, x0=sk)
            i_new = self._i_solver.solve(self._a_i_base - w_i, b_i, x0=ik)
        b_r = self._m_over_dt @ rn + p.gamma * (d.mass @ ik)
        try:
            r_new = self._a_r_factor.solve(b_r)
        except RuntimeError as exc:
            raise StepError("recovered", str(exc)) from exc
        return s_new, i_new, r_new

    def _pathogen_solve(self, u_new, ck, i_new, cn):
        d, p, c = self.disc, self.params, self.controls
        b = self._m_over_dt @ cn + p.alpha * (d.mass @ i_new)
        if np.any(u_new):
            b = b - fem.assemble_scalar_convection(d.mesh, u_new, ck)
        if c.artificial_diffusion:
            uq = fem.mini_values_at_qp(d.mesh, u_new, 4)
            umag = np.sqrt(uq[..., 0] ** 2 + uq[..., 1] ** 2).mean(axis=1)  # (nt,)
            geo_h = np.sqrt(4.0 * fem._geometry(d.mesh).areas)  # local length scale
            extra = fem.assemble_stiffness_p1(d.mesh, 0.5 * geo_h * umag)
            a, b = fem.apply_dirichlet(self._a_c_raw + extra, b, d.scalar_bdofs, 0.0)
            return self._solve_scalar(a, b, "pathogen")
        b[d.scalar_bdofs] = 0.0
        try:
            return self._a_c_factor.solve(b)
        except RuntimeError as exc:
            raise StepError("pathogen", str(exc)) from exc

    # -- one full step -------------------------------------------------------

    def step(self, state: State) -> tuple[State, StepReport]:
        c = self.controls
        t_new = state.t + c.dt
        un, cn, sn, in_, rn = state.u, state.c, state.s, state.i, state.r
        uk, pk, ck, sk, ik, rk = (state.u, state.p, state.c, state.s, state.i, state.r)
        max_update = np.inf
        converged = False
        iters = 0
        u_new, p_new = uk, pk
        for _ in range(c.picard_max):
            iters += 1
            if c.fluid_enabled:
                u_new, p_new = self._momentum_solve(uk, pk, ck, un, t_new)
            else:
                u_new = np.zeros_like(un)
                p_new = np.zeros(self.disc.n_pressure)
            if c.sir_frozen:
                s_new, i_new, r_new = sn, in_, rn
            else:
                s_new, i_new, r_new = self._host_solves(ck, sk, ik, rk, sn, in_, rn)
            c_new = self._pathogen_solve(u_new, ck, i_new, cn)
            max_update = max(
                _rel_update(u_new, uk), _rel_update(p_new, pk),
                _rel_update(c_new, ck), _rel_update(s_new, sk),
                _rel_update(i_new, ik), _rel_update(r_new, rk),
            )
            uk, pk, ck, sk, ik, rk = u_new, p_new, c_new, s_new, i_new, r_new
            if c.picard_mode == SINGLE_SWEEP:
                converged = True
                break
            if max_update < c.picard_tol:
                converged = True
                break
        if c.clip_negative:
            ck, sk, ik, rk = (np.maximum(v, 0.0) for v in (ck, sk, ik, rk))
        new_state = State(t=t_new, u=uk, p=pk, c=ck, s=sk, i=ik, r=rk)
        report = StepReport(
            picard_iters=iters,
            converged=converged,
            max_update=float(max_update),
            div_inf=self.disc.divergence_residual(uk) if c.fluid_enabled else 0.0,
        )
        return new_state, report


def step(state: State, params: ModelParams, controls: StepControls,
         disc: Discretization) -> tuple[State, StepReport]:
    """Single-shot step; build a Stepper directly for repeated stepping."""
    return Stepper(disc, params, controls).step(state)


@dataclass(frozen=True)
class MonitorConfig:
    monitor_cadence: int = 1
    snapshot_cadence: int = 500

    def __post_init__(self):
        if self.monitor_cadence < 1 or self.snapshot_cadence < 1:
            raise ValueError("cadences must be >= 1")


@dataclass
class Trajectory:
    """Snapshots, per-step monitor rows, and the final state of one run."""

    monitors: list
    snapshots: list  # (step index, State)
    final: State
    reports: list = field(default_factory=list)


def run(initial: State, params: ModelParams, controls: StepControls, t_final: float,
        monitors: MonitorConfig = MonitorConfig(),
        disc: Discretization | None = None) -> Trajectory:
    """Advance from the initial state until t >= t_final, collecting monitors."""
    from .verify import monitor_row  # deferred: verify imports assembly, not stepping

    if t_final < initial.t - 1e-12:
        raise ValueError("t_final must not precede the initial time")
    if disc is None:
        raise ValueError("run() needs the Discretization the state was built on")
    n_steps = int(round((t_final - initial.t) / controls.dt))
    stepper = Stepper(disc, params, controls)
    state = initial
    rows = [monitor_row(state, disc, picard_iters=0)]
    snaps = [(0, state.copy())]
    reports = []
    for n in range(n_steps):
        try:
            state, rep = stepper.step(state)
        except StepError as exc:
            exc.step_index = n
            raise
        reports.append(rep)
        done = n + 1 == n_steps
        if (n + 1) % monitors.monitor_cadence == 0 or done:
            rows.append(monitor_row(state, disc, picard_iters=rep.picard_iters))
        if (n + 1) % monitors.snapshot_cadence == 0 or done:
            snaps.append((n + 1, state.copy()))
    return Trajectory(monitors=rows, snapshots=snaps, final=state, reports=reports)
