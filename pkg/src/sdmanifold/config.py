"""Run configuration parsed from a single JSON document.

Every section and key is optional; missing values take the defaults below,
which reproduce the mobile-robot tracking experiment (unicycle error
dynamics, h = 1, Q = I, R = I). Unknown keys are rejected.

    {
      "plant":      {"name": "unicycle", "params": {}},   unicycle: v_r = 1, omega_r = 0
      "cost":       {"Q": I, "R": I, "h": 1.0, "mode": "intersample", "M": 64},
      "N": 15,                         horizon of traced trajectories
      "terminal_radius": 0.01,         bound on |x[N]| for seeded traces
      "x_N": null,                     terminal point for `trace` (null: zero)
      "target": [0, 0, 3.14159...],    x* for `shoot`
      "newton":     {"tol": 1e-12, "max_iter": 50, "u_init_strategy": "previous_u"},
      "shooting":   {"target_tol": 1e-8, "max_updates": 30, "max_halvings": 30,
                     "continuation_steps": 4, "stage_tol": 0.3},
      "synthesis":  {"base_targets": "reference", "reference_points": 4,
                     "include_origin": true, "noise_std": 0.2, "per_target": 20,
                     "degree": 3, "seed": 0, "shot_tol": 1e-3, "fit_threshold": 0.05},
      "simulate":   {"x0": [0, 0, 3.14159...], "steps": 10, "meas_noise_std": 0.0,
                     "seed": 0, "law": null, "initial_pose": [0, 0, -3.14159...]},
      "output_dir": "out"
    }

``synthesis.base_targets`` is either a list of states or ``"reference"``: the
first ``reference_points`` states of the trajectory shot to ``target``, plus
the origin when ``include_origin`` is set. ``simulate.law`` defaults to
``<output_dir>/law.json``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cost import CostMode, CostSpec
from .errors import ConfigError
from .hamiltonian import NewtonOptions
from .plant import PLANTS, PlantModel, make_plant
from .shooting import ShootingOptions


@dataclass
class PlantSection:
    name: str = "unicycle"
    params: dict = field(default_factory=dict)  # plant defaults when empty


@dataclass
class CostSection:
    Q: list | None = None  # None: identity
    R: list | None = None
    h: float = 1.0
    mode: str = "intersample"
    M: int = 64


@dataclass
class NewtonSection:
    tol: float = 1e-12
    max_iter: int = 50
    u_init_strategy: str = "previous_u"


@dataclass
class ShootingSection:
    target_tol: float = 1e-8
    max_updates: int = 30
    max_halvings: int = 30
    continuation_steps: int = 4
    stage_tol: float = 0.3


@dataclass
class SynthesisSection:
    base_targets: object = "reference"
    reference_points: int = 4
    include_origin: bool = True
    noise_std: float = 0.2
    per_target: int = 20
    degree: int = 3
    seed: int = 0
    shot_tol: float = 1e-3
    fit_threshold: float = 5e-2


@dataclass
class SimulateSection:
    x0: list | None = None  # None: same as target
    steps: int = 10
    meas_noise_std: float = 0.0
    seed: int = 0
    law: str | None = None
    initial_pose: list = field(default_factory=lambda: [0.0, 0.0, -math.pi])


_SECTIONS = {
    "plant": PlantSection, "cost": CostSection, "newton": NewtonSection,
    "shooting": ShootingSection, "synthesis": SynthesisSection, "simulate": SimulateSection,
}


@dataclass
class RunConfig:
    plant: PlantSection = field(default_factory=PlantSection)
    cost: CostSection = field(default_factory=CostSection)
    N: int = 15
    terminal_radius: float = 1e-2
    x_N: list | None = None
    target: list = field(default_factory=lambda: [0.0, 0.0, math.pi])
    newton: NewtonSection = field(default_factory=NewtonSection)
    shooting: ShootingSection = field(default_factory=ShootingSection)
    synthesis: SynthesisSection = field(default_factory=SynthesisSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    output_dir: str = "out"

    # ------------------------------------------------------------ parsing

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        _reject_unknown(d, cls, "config")
        kw = {}
        for key, val in d.items():
            if key in _SECTIONS:
                sec = _SECTIONS[key]
                if not isinstance(val, dict):
                    raise ConfigError(f"'{key}' must be an object")
                _reject_unknown(val, sec, key)
                kw[key] = sec(**val)
            else:
                kw[key] = val
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config '{path}': {exc.strerror}") from None
        return cls.from_json(text)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    # ------------------------------------------------------------ validation

    def validate(self) -> None:
        if self.plant.name not in PLANTS:
            raise ConfigError(f"unknown plant '{self.plant.name}'; known: {sorted(PLANTS)}")
        if self.cost.mode not in {m.value for m in CostMode}:
            raise ConfigError(f"cost.mode must be 'sampled' or 'intersample', got '{self.cost.mode}'")
        if not isinstance(self.N, int) or self.N < 1:
            raise ConfigError("N must be a positive integer")
        if not self.terminal_radius > 0:
            raise ConfigError("terminal_radius must be positive")
        s = self.synthesis
        if not (isinstance(s.base_targets, str) and s.base_targets == "reference"
                or isinstance(s.base_targets, list)):
            raise ConfigError("synthesis.base_targets must be 'reference' or a list of states")
        if s.per_target < 1 or s.degree < 1 or s.reference_points < 0:
            raise ConfigError("synthesis.per_target and synthesis.degree must be >= 1")
        if self.simulate.steps < 1:
            raise ConfigError("simulate.steps must be >= 1")
        # building the numeric objects surfaces the remaining range checks
        plant = self.build_plant()
        self.build_cost(plant)
        self.build_newton()
        self.build_shooting()
        for name, vec in (("target", self.target), ("x_N", self.x_N), ("simulate.x0", self.simulate.x0)):
            if vec is not None and np.asarray(vec, dtype=float).shape != (plant.n,):
                raise ConfigError(f"{name} must have length {plant.n}")

    # ------------------------------------------------------------ builders

    def build_plant(self) -> PlantModel:
        try:
            return make_plant(self.plant.name, self.plant.params)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"plant: {exc}") from None

    def build_cost(self, plant: PlantModel | None = None) -> CostSpec:
        plant = plant or self.build_plant()
        Q = np.eye(plant.n) if self.cost.Q is None else np.asarray(self.cost.Q, dtype=float)
        R = np.eye(plant.m) if self.cost.R is None else np.asarray(self.cost.R, dtype=float)
        if np.atleast_2d(Q).shape != (plant.n, plant.n) or np.atleast_2d(R).shape != (plant.m, plant.m):
            raise ConfigError("cost.Q / cost.R do not match the plant dimensions")
        try:
            return CostSpec(Q, R, float(self.cost.h), self.cost.mode, int(self.cost.M))
        except ValueError as exc:
            raise ConfigError(f"cost: {exc}") from None

    def build_newton(self) -> NewtonOptions:
        try:
            return NewtonOptions(**dataclasses.asdict(self.newton))
        except ValueError as exc:
            raise ConfigError(f"newton: {exc}") from None

    def build_shooting(self, target_tol: float | None = None) -> ShootingOptions:
        kw = dataclasses.asdict(self.shooting)
        if target_tol is not None:
            kw["target_tol"] = target_tol
        try:
            return ShootingOptions(**kw)
        except ValueError as exc:
            raise ConfigError(f"shooting: {exc}") from None

    @property
    def sim_x0(self) -> np.ndarray:
        return np.asarray(self.target if self.simulate.x0 is None else self.simulate.x0, dtype=float)


def _reject_unknown(d: dict, cls, where: str) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    extra = sorted(set(d) - known)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")
