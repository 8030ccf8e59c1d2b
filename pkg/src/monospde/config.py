"""Problem configuration (TOML) and assembly of the library objects it describes."""

import hashlib
import json
import sys
from dataclasses import dataclass
from typing import List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import control, dynamics
from .errors import ConfigurationError
from .grid import BoundaryCondition, SpaceGrid1D, TimeGrid, build_triple
from .noise import BrownianDriver, make_noise_model, mu_rule
from .paths import AdmissibleBox, ControlField


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Strict):
    n_cells: int = Field(64, ge=3)
    n_steps: int = Field(128, ge=1)
    T: float = Field(1.0, gt=0)


class BoundaryConfig(_Strict):
    kind: Literal["dirichlet", "neumann", "robin"] = "dirichlet"
    robin_alpha: List[float] = [1.0, 1.0]


class DynamicsConfig(_Strict):
    family: Literal["porous_media", "burgers", "divergence"] = "porous_media"
    nonlinearity: Literal["identity", "tanh", "arctan", "zero"] = "tanh"
    lower: float = 1.0
    upper: float = 2.0
    lam: float = 1.0


class NoiseConfig(_Strict):
    n_modes: int = Field(16, ge=1)
    mu_rule: Literal["power", "constant", "list"] = "power"
    mu_scale: float = 0.5
    mu_power: float = 2.0
    mu_values: List[float] = []
    beta: float = 0.0
    gamma: float = 0.0


class CostConfig(_Strict):
    name: Literal["lq_tracking", "boundary_tracking", "burgers_tracking"] = "lq_tracking"
    state_weight: float = 1.0
    control_weight: float = 0.1
    boundary_weight: float = 0.1
    gradient_weight: float = 0.01
    terminal_weight: float = 1.0
    target_amplitude: float = 0.0
    target_mode: int = 1
    terminal_amplitude: float = 0.0
    terminal_mode: int = 1
    scale: float = 1.0


class BoxConfig(_Strict):
    lower_int: float = -np.inf
    upper_int: float = np.inf
    lower_bd: float = -np.inf
    upper_bd: float = np.inf


class InitialConfig(_Strict):
    amplitude: float = 1.0
    mode: int = 1
    control_interior: float = 0.0
    control_boundary: float = 0.0


class EnsembleConfig(_Strict):
    n_samples: int = Field(256, ge=1)
    seeds: List[int] = [1]


class ToleranceConfig(_Strict):
    newton_tol: float = 1e-12
    stationarity_tol: float = 1e-7
    max_iter: int = 200
    pontryagin_tol: float = 1e-4
    duality_tol: float = 1e-10
    fd_tol: float = 1e-6
    slope_min: float = 1.9
    spike_slope: List[float] = [0.9, 1.1]
    c1: float = 2.0


class ValidationConfig(_Strict):
    state_range: List[float] = [-10.0, 10.0]
    count: int = 100
    dimension: int = 1


class VerifyConfig(_Strict):
    suites: List[Literal["convergence", "optimality"]] = ["convergence", "optimality"]
    fd_directions: int = 10
    fd_eps: float = 1e-5
    gateaux_eps: List[float] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
    spike: bool = True
    spike_n_steps: int = 512
    spike_window_steps: List[int] = [1, 2, 4, 8]
    spike_samples: int = 32
    heat: bool = True
    heat_T: float = 0.1
    heat_cells_for_dt: int = 256
    heat_steps_for_dt: List[int] = [8, 16, 32, 64]
    heat_cells_for_h: List[int] = [8, 16, 32]
    heat_steps_for_h: int = 16384
    optimize: bool = True
    pontryagin: bool = True
    seed_sensitivity: bool = False
    n_modes_sensitivity: List[int] = [4, 8, 16]


class ProblemConfig(_Strict):
    name: str = "problem"
    grid: GridConfig = GridConfig()
    boundary: BoundaryConfig = BoundaryConfig()
    dynamics: DynamicsConfig = DynamicsConfig()
    noise: NoiseConfig = NoiseConfig()
    cost: CostConfig = CostConfig()
    box: BoxConfig = BoxConfig()
    initial: InitialConfig = InitialConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    tolerances: ToleranceConfig = ToleranceConfig()
    validation: ValidationConfig = ValidationConfig()
    verify: VerifyConfig = VerifyConfig()

    @model_validator(mode="after")
    def _consistent(self):
        if self.dynamics.family != "porous_media" and self.boundary.kind != "dirichlet":
            raise ValueError(f"{self.dynamics.family} dynamics need a Dirichlet condition")
        if not self.ensemble.seeds:
            raise ValueError("at least one seed is required")
        if (self.noise.beta or self.noise.gamma) and self.boundary.kind != "robin":
            raise ValueError("beta/gamma boundary noise requires a Robin condition")
        return self

    @property
    def seed(self):
        return self.ensemble.seeds[0]

    def config_hash(self):
        text = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def load_config(path):
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return ProblemConfig.model_validate(data)


def with_overrides(cfg, seed=None, samples=None):
    data = cfg.model_dump()
    if seed is not None:
        data["ensemble"]["seeds"] = [int(seed)] + [s for s in data["ensemble"]["seeds"][1:] if s != seed]
    if samples is not None:
        data["ensemble"]["n_samples"] = int(samples)
    return ProblemConfig.model_validate(data)


# ---- assembly ---------------------------------------------------------------

@dataclass
class Problem:
    config: ProblemConfig
    time_grid: TimeGrid
    triple: object
    noise: object
    spec: object
    cost: object
    box: AdmissibleBox
    x0: np.ndarray
    u0: ControlField

    def driver(self, seed=None, n_samples=None, time_grid=None):
        return BrownianDriver.for_noise(self.noise, time_grid or self.time_grid,
                                        n_samples or self.config.ensemble.n_samples,
                                        self.config.seed if seed is None else seed)

    def control_problem(self):
        return control.ControlProblem(self.spec, self.cost, self.box, self.x0, self.u0)


def _nonlinearity(dc):
    if dc.nonlinearity == "identity":
        return dynamics.identity()
    if dc.nonlinearity == "zero":
        return dynamics.zero()
    if dc.nonlinearity == "tanh":
        return dynamics.tanh_family(dc.lower, dc.upper)
    return dynamics.arctan_family(dc.lam)


def mu_values(nc):
    return mu_rule(nc.mu_rule, nc.n_modes, nc.mu_scale, nc.mu_power, nc.mu_values)


def mu_sequence(nc):
    """The coefficient rule extended to all mode indices (for summability checks)."""
    if nc.mu_rule == "power":
        return lambda k: nc.mu_scale * np.asarray(k, float) ** (-nc.mu_power)
    if nc.mu_rule == "constant":
        return lambda k: np.full(np.shape(k), nc.mu_scale)
    vals = np.asarray(nc.mu_values, float)
    return lambda k: np.where(np.asarray(k) <= len(vals), vals[np.minimum(np.asarray(k, int), len(vals)) - 1], 0.0)


def triple_kind(cfg):
    if cfg.dynamics.family != "porous_media":
        return "L2_pivot"
    return "Hminus1_pivot" if cfg.boundary.kind == "dirichlet" else "H1dual_pivot"


def sine(amplitude, mode):
    return lambda *args: amplitude * np.sin(mode * np.pi * args[-1])


def build_cost(cc):
    tgt = sine(cc.target_amplitude, cc.target_mode)
    ttg = sine(cc.terminal_amplitude, cc.terminal_mode)
    if cc.name == "lq_tracking":
        c = control.CostSpec("lq_tracking", cc.state_weight, tgt, cc.control_weight, cc.boundary_weight, 0.0,
                             "quadratic", cc.terminal_weight, ttg)
    elif cc.name == "boundary_tracking":
        c = control.CostSpec("boundary_tracking", cc.state_weight, tgt, cc.control_weight, cc.boundary_weight,
                             0.0, "linear", 0.0, ttg)
    else:
        c = control.CostSpec("burgers_tracking", cc.state_weight, tgt, cc.control_weight, cc.boundary_weight,
                             cc.gradient_weight, "quadratic", cc.terminal_weight, ttg)
    return c.scaled(cc.scale)


def build_problem(cfg, n_modes=None):
    tg = TimeGrid(cfg.grid.T, cfg.grid.n_steps)
    bc = BoundaryCondition(cfg.boundary.kind, tuple(cfg.boundary.robin_alpha) if cfg.boundary.kind == "robin" else None)
    triple = build_triple(SpaceGrid1D(cfg.grid.n_cells), bc, triple_kind(cfg))
    nc = cfg.noise
    if n_modes is not None:
        nc = nc.model_copy(update={"n_modes": n_modes})
    if nc.n_modes > triple.m:
        raise ConfigurationError(f"n_modes={nc.n_modes} exceeds the {triple.m} grid unknowns")
    noise = make_noise_model(triple, nc.n_modes, mu_values(nc), nc.beta, nc.gamma)
    fn = _nonlinearity(cfg.dynamics)
    fam = cfg.dynamics.family
    if fam == "porous_media":
        spec = dynamics.make_porous_media(triple, fn, noise)
    elif fam == "burgers":
        spec = dynamics.make_burgers(triple, fn, noise)
    else:
        spec = dynamics.make_divergence_form(triple, fn, noise)
    spec.constants = dynamics.HypothesisConstants(**{**spec.constants.__dict__, "c1": cfg.tolerances.c1})
    b = cfg.box
    box = AdmissibleBox(b.lower_int, b.upper_int, b.lower_bd, b.upper_bd)
    x0 = cfg.initial.amplitude * np.sin(cfg.initial.mode * np.pi * triple.xi)
    u0 = box.project(ControlField.constant(spec, tg, cfg.initial.control_interior, cfg.initial.control_boundary))
    return Problem(cfg, tg, triple, noise, spec, build_cost(cfg.cost), box, x0, u0)
