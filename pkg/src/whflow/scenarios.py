"""Named, config-driven experiments.

A config is a JSON document with the sections ``name``, ``grid``, ``time``,
``energy``, ``initial``, ``integrator``, ``oracle`` and ``output_dir``.  The
five built-in presets live in ``whflow/configs``.  :func:`run` integrates the
flow, runs the configured oracle and writes

* ``diagnostics.csv``: one row per time step;
* ``snapshots/``: field CSVs every ``time.snapshot_stride`` steps;
* ``summary.json``: scalar results (schema below, deterministic except ``wall_clock_seconds``).
"""

from __future__ import annotations

import copy
import json
import math
import time as _time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import particles as pt
from .dynamics import (
    DualState,
    Trajectory,
    hamiltonian,
    hj_residual,
    integrate_flow,
    primal_residual,
    velocity_ratio,
)
from .errors import ConfigError, PositivityError, WHFError
from .functionals import EnergyFunctional, FisherInformation, Interaction, LinearPotential
from .grid import MIN_CELLS, Grid, gradient, integrate, save_field, zero_mean
from .presets import PROFILE_KINDS, field_from_spec, profile
from .quantum import HeatPair, bridge_path, heat_pair_evolve, heat_pair_mass, madelung_compose, madelung_split_step, norm

SCHEMA_VERSION = 1
SCENARIOS = ("geodesic", "linear-vlasov", "nonlinear-vlasov", "schrodinger", "bridge")
ORACLES = ("none", "particles", "schrodinger", "bridge")
INTEGRATORS = ("midpoint", "rk4")
TERM_KINDS = ("linear", "interaction", "fisher")
SCHRODINGER_FISHER = 0.125
BRIDGE_FISHER = -0.125
# dt * omega_max limits for the stiff Fisher term: RK4 imaginary-axis
# stability (~2.83) and contraction of the midpoint fixed point (< 2)
DISPERSION_LIMIT = {"rk4": 2.5, "midpoint": 1.8}

_SECTION_KEYS = {
    "grid": {"dim", "n"},
    "time": {"dt", "T", "snapshot_stride"},
    "integrator": {"method", "newton_tol", "max_iters"},
    "oracle": {"kind", "N", "seed", "smoothing", "write_ensemble"},
}
_TOP_KEYS = {"name", "grid", "time", "energy", "initial", "integrator", "oracle", "output_dir"}

SUMMARY_KEYS = (
    "schema_version", "scenario", "grid", "dt", "T", "n_steps", "integrator",
    "hamiltonian_initial", "hamiltonian_final", "hamiltonian_drift", "mass_error",
    "min_rho", "max_velocity", "primal_residual_mid", "oracle", "oracle_l1",
    "oracle_bound", "oracle_pass", "oracle_details", "seed", "wall_clock_seconds",
)


@dataclass
class ScenarioConfig:
    name: str
    grid: dict
    time: dict
    energy: list = field(default_factory=list)
    initial: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=lambda: {"method": "midpoint"})
    oracle: dict = field(default_factory=lambda: {"kind": "none"})
    output_dir: str = "runs/out"

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        unknown = sorted(set(data) - _TOP_KEYS)
        if unknown:
            raise ConfigError([f"{k}: unknown config key" for k in unknown])
        missing = sorted({"name", "grid", "time"} - set(data))
        if missing:
            raise ConfigError([f"{k}: required" for k in missing])
        return cls(**copy.deepcopy(data))

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {path} is not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def preset(cls, name: str) -> "ScenarioConfig":
        if name not in SCENARIOS:
            raise ConfigError(f"name: unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
        text = resources.files("whflow.configs").joinpath(f"{name}.json").read_text()
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    def with_overrides(self, overrides) -> "ScenarioConfig":
        data = self.to_dict()
        for item in overrides or ():
            key, value = parse_override(item)
            set_dotted(data, key, value)
        return ScenarioConfig.from_dict(data)

    @property
    def n_steps(self) -> int:
        return int(round(self.time["T"] / self.time["dt"]))


def parse_override(item: str):
    if "=" not in item:
        raise ConfigError(f"override {item!r}: expected key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def set_dotted(data: dict, key: str, value):
    """Set ``a.b.0.c`` style keys; every parent must already exist."""
    parts = key.split(".")
    node = data
    for depth, part in enumerate(parts[:-1]):
        node = _child(node, part, ".".join(parts[: depth + 1]), key)
    last = parts[-1]
    if isinstance(node, list):
        idx = _index(node, last, key)
        node[idx] = value
    elif isinstance(node, dict):
        if len(parts) == 1 and last not in _TOP_KEYS:
            raise ConfigError(f"{key}: unknown config key")
        allowed = _SECTION_KEYS.get(parts[0]) if len(parts) == 2 else None
        if allowed is not None and last not in allowed:
            raise ConfigError(f"{key}: unknown config key")
        node[last] = value
    else:
        raise ConfigError(f"{key}: cannot set a field inside a scalar")


def _child(node, part, prefix, key):
    if isinstance(node, list):
        return node[_index(node, part, key)]
    if isinstance(node, dict) and part in node:
        return node[part]
    raise ConfigError(f"{key}: no such config section {prefix!r}")


def _index(node, part, key):
    try:
        idx = int(part)
    except ValueError:
        raise ConfigError(f"{key}: {part!r} is not a list index") from None
    if not -len(node) <= idx < len(node):
        raise ConfigError(f"{key}: index {idx} out of range")
    return idx


# ---------------------------------------------------------------- building


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def build_grid(cfg: ScenarioConfig) -> Grid:
    return Grid.regular(cfg.grid["dim"], cfg.grid["n"])


def build_energy(cfg: ScenarioConfig, grid: Grid) -> EnergyFunctional:
    terms = []
    for term in cfg.energy:
        kind, coef = term["kind"], float(term.get("coefficient", 1.0))
        if kind == "linear":
            terms.append(LinearPotential(field_from_spec(term["potential"], grid), coef))
        elif kind == "interaction":
            kernel = field_from_spec(term["kernel"], grid)
            terms.append(Interaction(kernel, coef, term.get("method", "fft")))
        else:
            terms.append(FisherInformation(coef))
    return EnergyFunctional(tuple(terms))


def initial_state(cfg: ScenarioConfig, grid: Grid) -> DualState:
    rho = field_from_spec(cfg.initial["rho"], grid)
    if rho.min() <= 0:
        raise PositivityError(f"initial.rho has a nonpositive cell (min {rho.min():.3e})")
    rho = rho / integrate(rho)
    phi_spec = cfg.initial.get("phi", {"preset": "zero"})
    return DualState(rho, zero_mean(field_from_spec(phi_spec, grid)))


def initial_heat_pair(cfg: ScenarioConfig, grid: Grid) -> HeatPair:
    return HeatPair(field_from_spec(cfg.initial["eta"], grid), field_from_spec(cfg.initial["eta_star"], grid))


def dispersion_number(cfg: ScenarioConfig) -> float:
    """``dt * omega_max`` of the linearized Fisher dynamics (0 without a Fisher term)."""
    c = sum(abs(float(t.get("coefficient", 1.0))) for t in cfg.energy if t.get("kind") == "fisher")
    if c == 0:
        return 0.0
    n, d = cfg.grid["n"], cfg.grid["dim"]
    return cfg.time["dt"] * math.sqrt(2.0 * c) * 4.0 * d * n * n


# -------------------------------------------------------------- validation


def _check_profile(spec, where, violations):
    if not isinstance(spec, dict):
        violations.append(f"{where}: expected an object with 'preset' or 'file'")
        return
    if "file" in spec:
        if not Path(spec["file"]).is_file():
            violations.append(f"{where}.file: no such file {spec['file']!r}")
        return
    kind = spec.get("preset")
    if kind not in PROFILE_KINDS:
        violations.append(f"{where}.preset: unknown preset {kind!r} (choose from {', '.join(PROFILE_KINDS)})")


def validate(cfg: ScenarioConfig) -> list[str]:
    """Empty list iff ``cfg`` is runnable; each entry names the field and rule."""
    v: list[str] = []
    if cfg.name not in SCENARIOS:
        v.append(f"name: unknown scenario {cfg.name!r} (choose from {', '.join(SCENARIOS)})")
    for section, allowed in _SECTION_KEYS.items():
        value = getattr(cfg, section)
        if not isinstance(value, dict):
            v.append(f"{section}: expected an object")
            continue
        v.extend(f"{section}.{k}: unknown config key" for k in sorted(set(value) - allowed))
    if v:
        return v

    dim, n = cfg.grid.get("dim"), cfg.grid.get("n")
    if dim not in (1, 2):
        v.append("grid.dim: must be 1 or 2")
    if not isinstance(n, int) or isinstance(n, bool) or n < MIN_CELLS:
        v.append(f"grid.n: minimum grid size is {MIN_CELLS} cells per axis")

    dt, T = cfg.time.get("dt"), cfg.time.get("T")
    if not _is_number(dt) or dt <= 0:
        v.append("time.dt: must be a positive number")
    if not _is_number(T) or T <= 0:
        v.append("time.T: must be a positive number")
    if not v and abs(round(T / dt) * dt - T) > 1e-9 * T:
        v.append("time.T: must be an integer multiple of time.dt")
    stride = cfg.time.get("snapshot_stride", 0)
    if not isinstance(stride, int) or isinstance(stride, bool) or stride < 0:
        v.append("time.snapshot_stride: must be a nonnegative integer (0 disables snapshots)")

    method = cfg.integrator.get("method", "midpoint")
    if method not in INTEGRATORS:
        v.append(f"integrator.method: must be one of {', '.join(INTEGRATORS)}")
    tol = cfg.integrator.get("newton_tol", 1e-12)
    if not _is_number(tol) or tol <= 0:
        v.append("integrator.newton_tol: must be positive")
    iters = cfg.integrator.get("max_iters", 100)
    if not isinstance(iters, int) or iters < 1:
        v.append("integrator.max_iters: must be a positive integer")

    if not isinstance(cfg.energy, list):
        v.append("energy: expected a list of terms")
        return v
    kinds = []
    for i, term in enumerate(cfg.energy):
        where = f"energy.{i}"
        if not isinstance(term, dict) or term.get("kind") not in TERM_KINDS:
            v.append(f"{where}.kind: must be one of {', '.join(TERM_KINDS)}")
            continue
        kinds.append(term["kind"])
        if not _is_number(term.get("coefficient", 1.0)):
            v.append(f"{where}.coefficient: must be a finite number")
        if term["kind"] == "linear":
            _check_profile(term.get("potential"), f"{where}.potential", v)
        elif term["kind"] == "interaction":
            _check_profile(term.get("kernel"), f"{where}.kernel", v)
            if term.get("method", "fft") not in ("fft", "direct"):
                v.append(f"{where}.method: must be 'fft' or 'direct'")
    fisher = sum(float(t.get("coefficient", 1.0)) for t in cfg.energy
                 if isinstance(t, dict) and t.get("kind") == "fisher" and _is_number(t.get("coefficient", 1.0)))
    _scenario_rules(cfg, kinds, fisher, v)

    if cfg.name == "bridge":
        for key in ("eta", "eta_star"):
            _check_profile(cfg.initial.get(key), f"initial.{key}", v)
    else:
        _check_profile(cfg.initial.get("rho"), "initial.rho", v)
        if "phi" in cfg.initial:
            _check_profile(cfg.initial["phi"], "initial.phi", v)
    _check_oracle(cfg, v)
    if v:
        return v

    # guards that need the fields themselves
    grid = build_grid(cfg)
    try:
        if cfg.name == "bridge":
            hp = initial_heat_pair(cfg, grid)
            for key, f in (("eta", hp.eta), ("eta_star", hp.eta_star)):
                if f.min() <= 0:
                    v.append(f"initial.{key}: must be strictly positive")
        else:
            s0 = initial_state(cfg, grid)
            ratio = velocity_ratio(s0, dt)
            if ratio > 0.5:
                v.append(f"time.dt: CFL guard dt*max|grad phi|/h = {ratio:.3g} exceeds 0.5")
        for i, term in enumerate(cfg.energy):
            if term["kind"] == "interaction":
                Interaction(field_from_spec(term["kernel"], grid))
    except PositivityError as exc:
        v.append(f"initial.rho: {exc}")
    except (ValueError, OSError) as exc:
        v.append(f"energy/initial: {exc}")
    if cfg.name != "bridge" and not v:
        number = dispersion_number(cfg)
        limit = DISPERSION_LIMIT[method]
        if number > limit:
            v.append(f"time.dt: dispersion guard dt*omega_max = {number:.3g} exceeds {limit} for {method} "
                     f"(omega_max = sqrt(2|c|) * 4d/h^2 from the Fisher term)")
    return v


def _scenario_rules(cfg, kinds, fisher, v):
    name = cfg.name
    if name == "geodesic" and kinds:
        v.append("energy: the geodesic scenario has F = 0 (no energy terms)")
    if name == "linear-vlasov" and set(kinds) != {"linear"}:
        v.append("energy: linear-vlasov needs linear potential terms only")
    if name == "nonlinear-vlasov":
        if "interaction" not in kinds:
            v.append("energy: nonlinear-vlasov needs an interaction term")
        if "fisher" in kinds:
            v.append("energy: nonlinear-vlasov does not take a Fisher term")
    if name == "schrodinger":
        if "fisher" not in kinds:
            v.append(f"energy: schrodinger requires a Fisher term with coefficient +{SCHRODINGER_FISHER}")
        elif abs(fisher - SCHRODINGER_FISHER) > 1e-15:
            v.append(f"energy: schrodinger requires total Fisher coefficient +{SCHRODINGER_FISHER}, got {fisher}")
        if "interaction" in kinds:
            v.append("energy: schrodinger takes linear and Fisher terms only")
    if name == "bridge":
        if set(kinds) != {"fisher"}:
            v.append(f"energy: bridge requires exactly a Fisher term with coefficient {BRIDGE_FISHER}")
        elif abs(fisher - BRIDGE_FISHER) > 1e-15:
            v.append(f"energy: bridge requires total Fisher coefficient {BRIDGE_FISHER}, got {fisher}")


def _check_oracle(cfg, v):
    kind = cfg.oracle.get("kind", "none")
    if kind not in ORACLES:
        v.append(f"oracle.kind: must be one of {', '.join(ORACLES)}")
        return
    if kind == "particles":
        if cfg.name not in ("linear-vlasov", "nonlinear-vlasov"):
            v.append("oracle.kind: particles oracle applies to linear-vlasov and nonlinear-vlasov")
        N = cfg.oracle.get("N")
        if not isinstance(N, int) or isinstance(N, bool) or N < 1:
            v.append("oracle.N: must be a positive integer")
        seed = cfg.oracle.get("seed")
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            v.append("oracle.seed: must be a nonnegative integer")
        smoothing = cfg.oracle.get("smoothing", 1)
        if not isinstance(smoothing, int) or smoothing < 0:
            v.append("oracle.smoothing: must be a nonnegative integer")
        for i, term in enumerate(cfg.energy):
            if term.get("kind") == "linear" and "file" in (term.get("potential") or {}):
                v.append(f"energy.{i}.potential: particle forces need an analytic preset, not a file")
    elif kind == "schrodinger" and cfg.name != "schrodinger":
        v.append("oracle.kind: schrodinger oracle applies to the schrodinger scenario")
    elif kind == "bridge" and cfg.name != "bridge":
        v.append("oracle.kind: bridge oracle applies to the bridge scenario")
    elif kind == "none" and cfg.name == "bridge":
        v.append("oracle.kind: the bridge scenario is defined by its oracle; use 'bridge'")


# ----------------------------------------------------------------- running


@dataclass
class RunReport:
    summary: dict
    trajectory: Trajectory
    output_dir: Path | None


class _ParticleForce:
    """Analytic ``-grad V`` for linear terms plus the mean-field force for interactions."""

    def __init__(self, cfg, F, grid, smoothing):
        self.parts = []
        for spec, term in zip(cfg.energy, F.terms):
            if term.kind == "linear":
                self.parts.append(pt.PotentialForce(profile(spec["potential"]), term.coefficient))
        mean_field = EnergyFunctional(tuple(t for t in F.terms if t.kind == "interaction"))
        if mean_field.terms:
            self.parts.append(pt.MeanFieldForce(mean_field, grid, smoothing))

    def __call__(self, t, positions):
        acc = np.zeros_like(positions)
        for part in self.parts:
            acc += part(t, positions)
        return acc


def _particle_oracle(cfg, grid, F, traj):
    N, seed = cfg.oracle["N"], cfg.oracle["seed"]
    smoothing = cfg.oracle.get("smoothing", 1)
    s0 = traj.states[0]
    ens = pt.init_from_density(s0.rho, s0.phi, N, seed)
    p0 = ens.momentum()
    ens = pt.evolve_particles(ens, _ParticleForce(cfg, F, grid, smoothing), cfg.time["dt"], cfg.n_steps)
    rho_T = traj.states[-1].rho
    l1 = pt.compare_densities(pt.push_forward(ens, grid, smoothing), rho_T)
    bound = 5.0 / math.sqrt(N)
    details = {
        "N": N,
        "smoothing": smoothing,
        "l1_unsmoothed": pt.compare_densities(pt.push_forward(ens, grid), rho_T),
        "momentum_change": float(np.abs(ens.momentum() - p0).max()),
    }
    return l1, bound, details, ens


def _schrodinger_oracle(cfg, grid, F, traj):
    V = sum((t.coefficient * t.potential for t in F.terms if t.kind == "linear"), grid.zeros())
    s0 = traj.states[0]
    psi = madelung_compose(s0.rho, s0.phi)
    for _ in range(cfg.n_steps):
        psi = madelung_split_step(psi, V, cfg.time["dt"])
    l1 = pt.compare_densities(np.abs(psi) ** 2, traj.states[-1].rho)
    return l1, {"norm_error": abs(norm(psi) - 1.0)}, psi


def _write_psi(path, psi):
    with open(path, "w") as fh:
        fh.write("re,im\n")
        for z in psi.ravel():
            fh.write(f"{z.real!r},{z.imag!r}\n")


def run(cfg: ScenarioConfig, output_dir=None, write: bool = True) -> RunReport:
    """Execute one scenario; raises :class:`ConfigError` before writing anything if invalid."""
    violations = validate(cfg)
    if violations:
        raise ConfigError(violations)
    start = _time.perf_counter()
    grid = build_grid(cfg)
    F = build_energy(cfg, grid)
    dt, T, n_steps = cfg.time["dt"], cfg.time["T"], cfg.n_steps
    method = cfg.integrator.get("method", "midpoint")
    oracle = cfg.oracle.get("kind", "none")

    if cfg.name == "bridge":
        hp = initial_heat_pair(cfg, grid)
        traj = bridge_path(hp, 0.0, T, dt, F)
    else:
        traj = integrate_flow(initial_state(cfg, grid), F, dt, n_steps, method,
                              cfg.integrator.get("newton_tol", 1e-12), cfg.integrator.get("max_iters", 100))

    h0 = hamiltonian(traj.states[0], F)
    h1 = hamiltonian(traj.states[-1], F)
    drift = abs(h1 - h0) / abs(h0) if abs(h0) > 1e-300 else abs(h1 - h0)
    mid = len(traj) // 2
    summary = {
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg.name,
        "grid": {"dim": grid.dim, "n": grid.shape[0]},
        "dt": dt,
        "T": T,
        "n_steps": n_steps,
        "integrator": "heat-pair" if cfg.name == "bridge" else method,
        "hamiltonian_initial": h0,
        "hamiltonian_final": h1,
        "hamiltonian_drift": drift,
        "mass_error": max(abs(row["mass"] - 1.0) for row in traj.diagnostics),
        "min_rho": min(row["min_rho"] for row in traj.diagnostics),
        "max_velocity": max(float(np.abs(gradient(s.phi)).max()) for s in traj.states),
        "primal_residual_mid": primal_residual(traj, F, mid) if len(traj) >= 3 else None,
        "oracle": oracle,
        "oracle_l1": None,
        "oracle_bound": None,
        "oracle_pass": None,
        "oracle_details": {},
        "seed": cfg.oracle.get("seed"),
    }
    ensemble = psi = None
    if oracle == "particles":
        l1, bound, details, ensemble = _particle_oracle(cfg, grid, F, traj)
        summary.update(oracle_l1=l1, oracle_bound=bound, oracle_pass=l1 <= bound, oracle_details=details)
    elif oracle == "schrodinger":
        l1, details, psi = _schrodinger_oracle(cfg, grid, F, traj)
        summary.update(oracle_l1=l1, oracle_details=details)
    elif oracle == "bridge":
        cont, hj = hj_residual(traj.states, dt, F, mid) if len(traj) >= 3 else (0.0, 0.0)
        m0 = heat_pair_mass(heat_pair_evolve(hp, 0.0, T, 0.0))
        pair_drift = max(abs(heat_pair_mass(heat_pair_evolve(hp, 0.0, T, t)) - m0) for t in traj.times)
        summary.update(oracle_details={"continuity_residual": cont, "hj_residual": hj,
                                       "pair_mass_change": pair_drift})
    summary["wall_clock_seconds"] = _time.perf_counter() - start

    out = None
    if write:
        out = Path(output_dir if output_dir is not None else cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        traj.write_diagnostics(out / "diagnostics.csv")
        stride = cfg.time.get("snapshot_stride", 0)
        if stride:
            traj.write_snapshots(out / "snapshots", stride)
            if cfg.name == "bridge":
                for k in range(0, len(traj), stride):
                    pair = heat_pair_evolve(hp, 0.0, T, traj.times[k])
                    save_field(out / "snapshots" / f"eta_{k:06d}.csv", pair.eta)
                    save_field(out / "snapshots" / f"eta_star_{k:06d}.csv", pair.eta_star)
        if ensemble is not None and cfg.oracle.get("write_ensemble", False):
            ensemble.write_csv(out / "particles_final.csv")
        if psi is not None:
            _write_psi(out / "psi_final.csv", psi)
        (out / "summary.json").write_text(summary_json(summary))
    return RunReport(summary, traj, out)


def summary_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def deterministic_view(summary: dict) -> str:
    """Summary JSON without the wall-clock field, for byte comparisons."""
    return summary_json({k: v for k, v in summary.items() if k != "wall_clock_seconds"})


__all__ = [
    "SCENARIOS", "SCHEMA_VERSION", "SUMMARY_KEYS", "ScenarioConfig", "RunReport", "WHFError",
    "build_energy", "build_grid", "initial_state", "run", "validate", "deterministic_view",
]
