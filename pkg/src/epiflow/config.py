"""Run configuration: file format, experiment presets, and serialization.

The config format is line-oriented ``key = value`` under ``[section]``
headers (sections: run, model, initial).  Unknown sections, malformed lines,
and duplicate keys are reported with their line number; unknown keys are
collected and reported together.  Keys omitted from the file fall back to
the experiment preset and the default parameter table.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .model import CoefficientFn, ModelParams
from .stepping import MonitorConfig, StepControls

EXPERIMENTS = ("exp1", "exp2", "exp3", "exp4", "pathogen_only", "custom")
INITIAL_PRESETS = ("localized_outbreak", "uniform", "zero")

DEFAULT_BETA0 = 0.3
DEFAULT_NU0 = 0.1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "exp1"
    nx: int = 32
    ny: int = 32
    t_final: float = 40.0
    controls: StepControls = field(default_factory=StepControls)
    params: ModelParams = field(default_factory=ModelParams)
    initial: str = "localized_outbreak"
    uniform_values: tuple = (0.9, 0.1, 0.0, 0.0)
    out_dir: str = "out"
    snapshot_cadence: int = 500
    monitor_cadence: int = 1
    deterministic: bool = True

    def monitor_config(self) -> MonitorConfig:
        return MonitorConfig(self.monitor_cadence, self.snapshot_cadence)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def _preset_fields(experiment: str) -> dict:
    """Experiment-specific deviations from the default configuration."""
    if experiment == "exp1":
        return {"fluid_enabled": False, "alpha": 0.0, "beta": "constant", "nu": "constant"}
    if experiment == "exp2":
        return {"fluid_enabled": False, "beta": "affine", "nu": "constant"}
    if experiment == "exp3":
        return {"fluid_enabled": True, "beta": "affine", "nu": "constant"}
    if experiment == "exp4":
        return {"fluid_enabled": True, "beta": "affine", "nu": "affine"}
    if experiment == "pathogen_only":
        return {
            "fluid_enabled": True, "alpha": 0.0, "sir_frozen": True,
            "beta": "constant", "nu": "constant",
        }
    if experiment == "custom":
        return {}
    raise ConfigError(f"unknown experiment {experiment!r}")


_RUN_KEYS = {
    "experiment": str, "nx": int, "ny": int, "dt": float, "T": float,
    "picard_mode": str, "picard_tol": float, "picard_max": int,
    "initial": str, "out_dir": str, "snapshot_cadence": int, "monitor_cadence": int,
    "deterministic": bool, "solver": str, "fluid_enabled": bool, "sir_frozen": bool,
    "momentum_convection": bool, "artificial_diffusion": bool, "clip_negative": bool,
}
_MODEL_KEYS = {
    "D_S": float, "D_I": float, "D_R": float, "D_C": float,
    "alpha": float, "gamma": float, "lambda": float, "eta": float, "Lambda": float,
    "beta0": float, "nu0": float, "n_floor": float,
    "beta": str, "beta_lo": float, "beta_hi": float,
    "nu": str, "nu_lo": float, "nu_hi": float,
}
_INITIAL_KEYS = {"s": float, "i": float, "r": float, "c": float}
_SCHEMA = {"run": _RUN_KEYS, "model": _MODEL_KEYS, "initial": _INITIAL_KEYS}


def _convert(section: str, key: str, raw: str, lineno: int):
    typ = _SCHEMA[section][key]
    if typ is bool:
        low = raw.lower()
        if low in ("true", "false"):
            return low == "true"
        raise ConfigError(f"line {lineno}: {key} expects true/false, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(
            f"line {lineno}: cannot parse {key} = {raw!r} as {typ.__name__}"
        ) from None


def _scan(text: str) -> dict:
    """Tokenize the file into {section: {key: value}} with line diagnostics."""
    values = {s: {} for s in _SCHEMA}
    section = None
    unknown: list[str] = []
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{name}]")
            section = name
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: malformed line {rawline.strip()!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not key or not raw:
            raise ConfigError(f"line {lineno}: malformed line {rawline.strip()!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key {key!r} appears before any [section]")
        if key not in _SCHEMA[section]:
            unknown.append(f"[{section}] {key}")
            continue
        if key in values[section]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{section}]")
        values[section][key] = _convert(section, key, raw, lineno)
    if unknown:
        raise ConfigError("unknown keys: " + ", ".join(unknown))
    return values


def _coefficient(kind: str, c0: float, lo: float, hi: float, label: str) -> CoefficientFn:
    if kind == "constant":
        return CoefficientFn.constant(c0)
    if kind == "affine":
        return CoefficientFn.affine(c0)
    if kind == "clamped_affine":
        return CoefficientFn.clamped_affine(c0, lo, hi)
    raise ConfigError(f"{label} must be constant, affine, or clamped_affine, got {kind!r}")


def parse_config(text: str, experiment_override: str | None = None) -> RunConfig:
    """Parse config text into a RunConfig; raises ConfigError with diagnostics."""
    values = _scan(text)
    run, mod, ini = values["run"], values["model"], values["initial"]

    experiment = experiment_override or run.get("experiment", "exp1")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    preset = _preset_fields(experiment)

    def pick(table, key, default):
        return table[key] if key in table else default

    nx = pick(run, "nx", 32)
    ny = pick(run, "ny", 32)
    if nx < 1 or ny < 1:
        raise ConfigError("nx and ny must be >= 1")
    dt = pick(run, "dt", 0.01)
    if dt <= 0:
        raise ConfigError("dt must be positive")
    t_final = pick(run, "T", 40.0)
    if t_final <= 0:
        raise ConfigError("T must be positive")
    picard_tol = pick(run, "picard_tol", 1e-8)
    if picard_tol <= 0:
        raise ConfigError("picard_tol must be positive")
    picard_max = pick(run, "picard_max", 50)
    if picard_max < 1:
        raise ConfigError("picard_max must be >= 1")
    picard_mode = pick(run, "picard_mode", "to_convergence")
    if picard_mode not in ("single_sweep", "to_convergence"):
        raise ConfigError(f"unknown picard_mode {picard_mode!r}")
    solver = pick(run, "solver", "direct")
    if solver not in ("direct", "gmres"):
        raise ConfigError(f"unknown solver {solver!r}")
    snapshot_cadence = pick(run, "snapshot_cadence", 500)
    monitor_cadence = pick(run, "monitor_cadence", 1)
    if snapshot_cadence < 1 or monitor_cadence < 1:
        raise ConfigError("cadences must be >= 1")
    initial = pick(run, "initial", "localized_outbreak")
    if initial not in INITIAL_PRESETS:
        raise ConfigError(f"unknown initial preset {initial!r}")

    controls = StepControls(
        dt=dt,
        picard_mode=picard_mode,
        picard_tol=picard_tol,
        picard_max=picard_max,
        fluid_enabled=pick(run, "fluid_enabled", preset.get("fluid_enabled", True)),
        sir_frozen=pick(run, "sir_frozen", preset.get("sir_frozen", False)),
        momentum_convection=pick(run, "momentum_convection", True),
        artificial_diffusion=pick(run, "artificial_diffusion", False),
        clip_negative=pick(run, "clip_negative", False),
        solver=solver,
    )

    beta0 = pick(mod, "beta0", DEFAULT_BETA0)
    nu0 = pick(mod, "nu0", DEFAULT_NU0)
    beta_kind = pick(mod, "beta", preset.get("beta", "constant"))
    nu_kind = pick(mod, "nu", preset.get("nu", "constant"))
    beta_spec = _coefficient(beta_kind, beta0, pick(mod, "beta_lo", 0.05),
                             pick(mod, "beta_hi", 2.0), "beta")
    nu_spec = _coefficient(nu_kind, nu0, pick(mod, "nu_lo", 0.05),
                           pick(mod, "nu_hi", 2.0), "nu")
    params = ModelParams(
        D_S=pick(mod, "D_S", 0.2),
        D_I=pick(mod, "D_I", 0.3),
        D_R=pick(mod, "D_R", 0.4),
        D_C=pick(mod, "D_C", 0.1),
        alpha=pick(mod, "alpha", preset.get("alpha", 0.6)),
        gamma=pick(mod, "gamma", 0.4),
        lam=pick(mod, "lambda", 0.4),
        eta=pick(mod, "eta", 0.05),
        Lambda=pick(mod, "Lambda", 0.4),
        beta_spec=beta_spec,
        nu_spec=nu_spec,
        n_floor=pick(mod, "n_floor", 1e-10),
    )

    uniform = (
        pick(ini, "s", 0.9), pick(ini, "i", 0.1), pick(ini, "r", 0.0), pick(ini, "c", 0.0),
    )
    return RunConfig(
        experiment=experiment,
        nx=nx, ny=ny, t_final=t_final,
        controls=controls, params=params,
        initial=initial, uniform_values=uniform,
        out_dir=pick(run, "out_dir", "out"),
        snapshot_cadence=snapshot_cadence,
        monitor_cadence=monitor_cadence,
        deterministic=pick(run, "deterministic", True),
    )


def experiment_preset(experiment: str) -> RunConfig:
    """Default full configuration of a named experiment."""
    return parse_config(f"[run]\nexperiment = {experiment}\n")


def serialize_config(cfg: RunConfig) -> str:
    """Write every effective key explicitly; parse(serialize(cfg)) == cfg."""
    c, p = cfg.controls, cfg.params
    lines = [
        "[run]",
        f"experiment = {cfg.experiment}",
        f"nx = {cfg.nx}",
        f"ny = {cfg.ny}",
        f"dt = {c.dt:.17g}",
        f"T = {cfg.t_final:.17g}",
        f"picard_mode = {c.picard_mode}",
        f"picard_tol = {c.picard_tol:.17g}",
        f"picard_max = {c.picard_max}",
        f"initial = {cfg.initial}",
        f"out_dir = {cfg.out_dir}",
        f"snapshot_cadence = {cfg.snapshot_cadence}",
        f"monitor_cadence = {cfg.monitor_cadence}",
        f"deterministic = {'true' if cfg.deterministic else 'false'}",
        f"solver = {c.solver}",
        f"fluid_enabled = {'true' if c.fluid_enabled else 'false'}",
        f"sir_frozen = {'true' if c.sir_frozen else 'false'}",
        f"momentum_convection = {'true' if c.momentum_convection else 'false'}",
        f"artificial_diffusion = {'true' if c.artificial_diffusion else 'false'}",
        f"clip_negative = {'true' if c.clip_negative else 'false'}",
        "",
        "[model]",
        f"D_S = {p.D_S:.17g}",
        f"D_I = {p.D_I:.17g}",
        f"D_R = {p.D_R:.17g}",
        f"D_C = {p.D_C:.17g}",
        f"alpha = {p.alpha:.17g}",
        f"gamma = {p.gamma:.17g}",
        f"lambda = {p.lam:.17g}",
        f"eta = {p.eta:.17g}",
        f"Lambda = {p.Lambda:.17g}",
        f"beta0 = {p.beta_spec.c0:.17g}",
        f"nu0 = {p.nu_spec.c0:.17g}",
        f"n_floor = {p.n_floor:.17g}",
        f"beta = {p.beta_spec.kind}",
        f"nu = {p.nu_spec.kind}",
    ]
    if p.beta_spec.kind == "clamped_affine":
        lines += [f"beta_lo = {p.beta_spec.lo:.17g}", f"beta_hi = {p.beta_spec.hi:.17g}"]
    if p.nu_spec.kind == "clamped_affine":
        lines += [f"nu_lo = {p.nu_spec.lo:.17g}", f"nu_hi = {p.nu_spec.hi:.17g}"]
    s, i, r, cc = cfg.uniform_values
    lines += [
        "",
        "[initial]",
        f"s = {s:.17g}",
        f"i = {i:.17g}",
        f"r = {r:.17g}",
        f"c = {cc:.17g}",
        "",
    ]
    return "\n".join(lines)
