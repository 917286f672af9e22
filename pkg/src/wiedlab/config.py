"""Experiment configuration: JSON schema, validation, initial data."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .combustion import CombustionModel, ModelError, model_from_dict
from .grid import Cylinder, GridError, GridSpec, WeightedGrid, build_grid
from .parabolic import ParabolicConfig
from .wied import EpsilonSchedule, WiedConfig


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class InitialData:
    kind: str                 # gaussian | plateau | from-file
    params: dict = field(default_factory=dict)

    def evaluate(self, grid: WeightedGrid) -> np.ndarray:
        if self.kind == "gaussian":
            w = float(self.params.get("width", 0.1))
            h = float(self.params.get("height", 1.0))
            if w <= 0:
                raise ConfigError("gaussian width must be positive")
            U0 = grid.eval_spatial(
                lambda *xy: h * np.exp(-(sum(v**2 for v in xy)) / (4.0 * w)))
        elif self.kind == "plateau":
            r0 = float(self.params.get("radius", 0.5))
            h = float(self.params.get("height", 1.0))
            axis = self.params.get("axis", "radial")
            if r0 <= 0:
                raise ConfigError("plateau radius must be positive")
            if axis == "radial":
                U0 = grid.eval_spatial(
                    lambda *xy: h * np.clip(
                        1.0 - sum(v**2 for v in xy) / r0**2, 0.0, None) ** 2)
            elif axis == "trace":
                # supported in x only, constant in the extension variable
                U0 = grid.eval_spatial(
                    lambda *xy: h * np.clip(
                        1.0 - sum(v**2 for v in xy[:-1]) / r0**2,
                        0.0, None) ** 2 + 0.0 * xy[-1])
            else:
                raise ConfigError(f"unknown plateau axis {axis!r}")
        elif self.kind == "from-file":
            path = Path(self.params["path"])
            if not path.exists():
                raise ConfigError(f"initial data file not found: {path}")
            U0 = np.load(path)
            if U0.shape != grid.spatial_shape:
                raise ConfigError(
                    f"initial field shape {U0.shape} != grid "
                    f"{grid.spatial_shape}")
        else:
            raise ConfigError(f"unknown initial data kind {self.kind!r}")
        return np.asarray(U0, dtype=float).ravel()

    def check_strict_support(self, grid: WeightedGrid):
        """Initial trace must vanish near the lateral boundary (finite
        ignition region, strictly inside the truncated box)."""
        U0 = self.evaluate(grid).reshape(grid.spatial_shape)
        u0 = U0[0]
        edge = np.zeros(u0.shape, dtype=bool)
        for k in range(grid.d):
            sl = [slice(None)] * grid.d
            for j in (0, -1):
                sl[k] = j
                edge[tuple(sl)] = True
        if np.any(u0[edge] > 0.0):
            raise ConfigError(
                "strict-support: initial trace is positive on the lateral "
                "boundary; shrink the support or enlarge L")


@dataclass
class DiagnosticRequest:
    name: str
    options: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    grid: GridSpec
    model: CombustionModel
    initial: InitialData
    schedule: EpsilonSchedule
    wied: WiedConfig
    parabolic: ParabolicConfig
    diagnostics: list
    output: str = "runs/out"
    seed: int = 0
    strict_support: bool = False
    forcing_exponents: tuple = (3.0, 4.0)

    def validate(self) -> "ExperimentConfig":
        grid = build_grid(self.grid)
        if self.strict_support:
            self.initial.check_strict_support(grid)
        else:
            self.initial.evaluate(grid)
        for req in self.diagnostics:
            c = req.options.get("center")
            r = req.options.get("radius")
            if c is not None and r is not None:
                Cylinder(tuple(c), float(r)).require_fits(grid)
            for c in req.options.get("centers", []):
                if not Cylinder(tuple(c), 1.0).fits(grid):
                    raise ConfigError(
                        f"diagnostic {req.name!r}: probe {c} too close to "
                        "the boundary for unit-radius cylinders")
        return self


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def config_from_dict(data: dict) -> ExperimentConfig:
    try:
        grid = GridSpec.from_dict(data["grid"])
        model = model_from_dict(data.get("model", {"kind": "zero"}))
        init = data.get("initial", {"kind": "plateau"})
        initial = InitialData(kind=init.get("kind", "plateau"),
                              params={k: v for k, v in init.items()
                                      if k != "kind"})
        sched = data.get("schedule", {"eps0": 0.1, "ratio": 0.5, "count": 1})
        schedule = EpsilonSchedule(**sched)
        wied = WiedConfig(eps=schedule.eps0, **data.get("wied", {}))
        parab = ParabolicConfig(**data.get("parabolic", {}))
        diags = [DiagnosticRequest(name=d["name"],
                                   options={k: v for k, v in d.items()
                                            if k != "name"})
                 for d in data.get("diagnostics", [])]
        fexp = data.get("forcing_exponents", {"p": 3.0, "q": 4.0})
        cfg = ExperimentConfig(
            grid=grid, model=model, initial=initial, schedule=schedule,
            wied=wied, parabolic=parab, diagnostics=diags,
            output=data.get("output", "runs/out"),
            seed=int(data.get("seed", 0)),
            strict_support=bool(data.get("strict_support", False)),
            forcing_exponents=(float(fexp["p"]), float(fexp["q"])),
        )
    except (KeyError, TypeError, GridError, ModelError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg.validate()
