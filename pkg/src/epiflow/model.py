"""Model coefficients, coefficient laws, initial conditions, and validation.

The governing system couples an incompressible flow (velocity U, pressure p)
with a pathogen concentration C advected by the flow and three host
compartments S, I, R.  Transmission beta(.) and viscosity nu(.) may depend on
the local pathogen concentration; both laws are representable as constant,
affine, or clamped-affine functions of C.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import DofLayout, interpolate
from .mesh import TriMesh

COEFF_KINDS = ("constant", "affine", "clamped_affine")


@dataclass(frozen=True)
class CoefficientFn:
    """Scalar law c(s): constant c0, affine c0 + s, or the affine law clipped to [lo, hi]."""

    kind: str
    c0: float
    lo: float = 0.0
    hi: float = float("inf")

    def __post_init__(self):
        if self.kind not in COEFF_KINDS:
            raise ValueError(f"unknown coefficient kind {self.kind!r}")

    @classmethod
    def constant(cls, c0: float) -> "CoefficientFn":
        return cls("constant", float(c0))

    @classmethod
    def affine(cls, c0: float) -> "CoefficientFn":
        return cls("affine", float(c0))

    @classmethod
    def clamped_affine(cls, c0: float, lo: float, hi: float) -> "CoefficientFn":
        return cls("clamped_affine", float(c0), float(lo), float(hi))


def eval_coefficient(fn: CoefficientFn, s):
    """Evaluate a coefficient law at s (scalar or array)."""
    if fn.kind == "constant":
        return fn.c0 if np.isscalar(s) else np.full_like(np.asarray(s, dtype=float), fn.c0)
    if fn.kind == "affine":
        return fn.c0 + s
    return np.clip(fn.c0 + s, fn.lo, fn.hi)


def safe_population(s, i, r, n_floor: float):
    """Total population S+I+R floored away from zero; the only denominator of SI/N."""
    return np.maximum(s + i + r, n_floor)


@dataclass(frozen=True)
class ModelParams:
    """All biological and physical coefficients of the coupled system.

    Diffusion: D_S, D_I, D_R (hosts), D_C (pathogen).  Rates: alpha shedding,
    gamma recovery, lam pathogen decay, eta mortality, Lambda birth.  beta_spec
    and nu_spec are the transmission and viscosity laws; forcing is an optional
    body force callable (x, y, t) -> (fx, fy); n_floor guards the population
    denominator.
    """

    D_S: float = 0.2
    D_I: float = 0.3
    D_R: float = 0.4
    D_C: float = 0.1
    alpha: float = 0.6
    gamma: float = 0.4
    lam: float = 0.4
    eta: float = 0.05
    Lambda: float = 0.4
    beta_spec: CoefficientFn = field(default_factory=lambda: CoefficientFn.constant(0.3))
    nu_spec: CoefficientFn = field(default_factory=lambda: CoefficientFn.constant(0.1))
    forcing: object = None  # callable (x, y, t) -> (fx, fy), or None for zero
    n_floor: float = 1e-10

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


def validate(params: ModelParams) -> list[str]:
    """Check parameter admissibility; returns a list of violations (empty if fine).

    Never raises: callers decide whether a violation is fatal.
    """
    out = []
    for name in ("D_S", "D_I", "D_R", "D_C"):
        if getattr(params, name) <= 0:
            out.append(f"(A-diffusion): {name} must be positive")
    for name in ("alpha", "gamma", "lam", "eta", "Lambda"):
        if getattr(params, name) < 0:
            out.append(f"(A-rates): {name} must be nonnegative")
    if params.n_floor <= 0:
        out.append("(A-denominator): n_floor must be positive")
    for label, spec in (("nu", params.nu_spec), ("beta", params.beta_spec)):
        if spec.kind == "constant":
            if spec.c0 <= 0:
                out.append(f"(A1): constant {label} must be positive")
        elif spec.kind == "affine":
            out.append(
                f"(A1): unbounded {label} violates the upper bound; "
                "use clamped_affine for a conforming law"
            )
        else:
            if not (0 < spec.lo <= spec.hi):
                out.append(f"(A1): {label} clamp must satisfy 0 < lo <= hi")
    return out


# ---------------------------------------------------------------------------
# initial conditions


def _vortex(x, y):
    """Divergence-free vortex with zero trace on the unit square boundary."""
    sx = np.sin(np.pi * (x - 1.0))
    sy = np.sin(np.pi * (y - 1.0))
    cx = np.cos(np.pi * (x - 1.0))
    cy = np.cos(np.pi * (y - 1.0))
    return sx * sx * sy * cy, -sy * sy * sx * cx


def _outbreak_c0(x, y):
    r2 = (x - 0.5) ** 2 + (y - 0.5) ** 2
    return (0.5 + 100.0 * r2) * np.exp(-r2)


def _outbreak_s0(x, y):
    r2 = (x - 0.5) ** 2 + (y - 0.5) ** 2
    return np.where(r2 <= 1.0, 0.9 * np.exp(-r2), 0.0)


def _outbreak_i0(x, y):
    r2 = (x - 0.5) ** 2 + (y - 0.5) ** 2
    return np.where(r2 <= 0.1, 0.1 * np.exp(-r2), 0.0)


def _outbreak_r0(x, y):
    d2 = (x - 0.7) ** 2 + (y - 0.3) ** 2
    return 0.01 * (0.5 + 5.0 * d2) * np.exp(-100.0 * d2)


@dataclass(frozen=True)
class InitialData:
    """Pointwise initial fields; C0, S0, I0, R0 must be nonnegative."""

    preset: str
    u0: object  # callable (x, y) -> (u1, u2)
    c0: object  # callable (x, y) -> value, likewise s0/i0/r0
    s0: object
    i0: object
    r0: object


def initial_data(
    preset: str = "localized_outbreak",
    uniform: tuple[float, float, float, float] = (0.9, 0.1, 0.0, 0.0),
    custom: dict | None = None,
) -> InitialData:
    """Named initial-condition presets.

    localized_outbreak: a vortex velocity, a centered pathogen blob, a broad
    susceptible hill, an infected disk of radius sqrt(0.1), and a small
    recovered spot at (0.7, 0.3).
    uniform: spatially constant (S, I, R, C) with zero velocity.
    zero: everything zero.
    custom: fields supplied explicitly via the custom dict.
    """
    if preset == "localized_outbreak":
        return InitialData(preset, _vortex, _outbreak_c0, _outbreak_s0, _outbreak_i0, _outbreak_r0)
    if preset == "uniform":
        s, i, r, c = (float(v) for v in uniform)
        if min(s, i, r, c) < 0:
            raise ValueError("uniform initial values must be nonnegative")
        return InitialData(
            preset,
            lambda x, y: (np.zeros_like(x), np.zeros_like(x)),
            lambda x, y: np.full_like(x, c),
            lambda x, y: np.full_like(x, s),
            lambda x, y: np.full_like(x, i),
            lambda x, y: np.full_like(x, r),
        )
    if preset == "zero":
        zero = lambda x, y: np.zeros_like(x)
        return InitialData(preset, lambda x, y: (np.zeros_like(x), np.zeros_like(x)),
                           zero, zero, zero, zero)
    if preset == "custom":
        if custom is None:
            raise ValueError("custom preset requires the field dict")
        return InitialData("custom", custom["u0"], custom["c0"], custom["s0"],
                           custom["i0"], custom["r0"])
    raise ValueError(f"unknown initial preset {preset!r}")


def initial_state(data: InitialData, mesh: TriMesh, zero_velocity: bool = False):
    """Interpolate initial data onto the discrete spaces; returns a State."""
    from .stepping import State

    p1 = DofLayout.p1_scalar(mesh)
    mini = DofLayout.mini_velocity(mesh)
    if zero_velocity:
        u = np.zeros(mini.dof_count)
    else:
        u = interpolate(data.u0, mini, mesh)
    return State(
        t=0.0,
        u=u,
        p=np.zeros(mesh.n_vertices),
        c=interpolate(data.c0, p1, mesh),
        s=interpolate(data.s0, p1, mesh),
        i=interpolate(data.i0, p1, mesh),
        r=interpolate(data.r0, p1, mesh),
    )
