"""epiflow: finite-element simulation of epidemics in a flowing medium.

A host population (susceptible / infected / recovered) diffuses over the
unit square while a waterborne pathogen is shed by the infected, decays,
diffuses, and is carried by an incompressible flow whose viscosity may in
turn depend on the pathogen concentration.  Space is discretized with P1
elements (P1-bubble for velocity), time with a semi-implicit backward Euler
scheme closed by an inner fixed-point iteration.
"""

from .assembly import (
    DofLayout,
    QuadratureRule,
    apply_dirichlet,
    assemble_divergence_block,
    assemble_mass_p1,
    assemble_mini_mass,
    assemble_mini_momentum_block,
    assemble_mini_stiffness,
    assemble_reaction_weighted_mass,
    assemble_scalar_convection,
    assemble_stiffness_p1,
    interpolate,
)
from .config import RunConfig, experiment_preset, parse_config, serialize_config
from .linalg import SolverReport, csr_from_triplets, solve_direct, solve_gmres
from .mesh import TriMesh, boundary_vertex_set, build_unit_square_mesh, mesh_size
from .model import (
    CoefficientFn,
    InitialData,
    ModelParams,
    eval_coefficient,
    initial_data,
    initial_state,
    safe_population,
    validate,
)
from .output import write_monitor_csv, write_vtk_snapshot
from .stepping import (
    Discretization,
    MonitorConfig,
    State,
    StepControls,
    StepReport,
    Stepper,
    Trajectory,
    run,
    step,
)
from .verify import (
    ConvergenceTable,
    MonitorRecord,
    OdeState,
    compare_pde_to_ode,
    mms_scalar_study,
    mms_stokes_study,
    monitor_row,
    sir_ode_oracle,
)

__version__ = "0.1.0"
