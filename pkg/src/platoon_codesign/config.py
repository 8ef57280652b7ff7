"""Scenario configuration: YAML files validated against a JSON Schema."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .codesign.types import CostSpec
from .platoon import VehicleParams
from .sim.leader import LeaderProfile, default_profile
from .sim.noise import NoiseSpec
from .sim.scenario import Event, Scenario

__all__ = ["ConfigError", "ScenarioConfig", "load_schema", "validate"]

SYNTHESIS_KEYS = ("vehicles", "formulation", "mode", "string_stability",
                  "gamma_bar", "costs", "p")


class ConfigError(ValueError):
    """Invalid or unreadable scenario configuration."""


def load_schema() -> dict:
    text = resources.files("platoon_codesign").joinpath(
        "schema/scenario.schema.json").read_text()
    return json.loads(text)


def validate(data: Any) -> None:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    try:
        jsonschema.validate(data, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


@dataclass
class ScenarioConfig:
    """Everything needed to synthesize and simulate one platoon."""

    count: int = 9
    base: VehicleParams = field(default_factory=VehicleParams)
    overrides: list[dict] = field(default_factory=list)
    formulation: str = "II"
    mode: str = "centralized"
    string_stability: bool = False
    gamma_bar: float = 10.0
    cost_rule: str = "distance"
    cost_matrix: list[list[float]] | None = None
    c0: float = 1.0
    c0i: float | list[float] = 1.0
    ci: float | list[float] = 1.0
    p: str | list[float] = "uniform"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    leader: LeaderProfile = field(default_factory=default_profile)
    events: list[Event] = field(default_factory=list)
    dt: float = 1e-3
    horizon: float = 10.0
    jitter: float = 1.0
    output: str = "out"

    # construction ----------------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        validate(data)
        veh = data.get("vehicles", {})
        costs = data.get("costs", {})
        noise = data.get("noise", {})
        sim = data.get("sim", {})
        count = int(veh.get("count", 9))
        for o in veh.get("overrides", []):
            if o["index"] > count:
                raise ConfigError(f"override index {o['index']} exceeds count {count}")
        rule = costs.get("rule", "matrix" if "matrix" in costs else "distance")
        matrix = costs.get("matrix")
        if rule == "matrix":
            if matrix is None:
                raise ConfigError("costs: rule 'matrix' needs a matrix")
            if len(matrix) != count or any(len(r) != count for r in matrix):
                raise ConfigError(f"costs: matrix must be {count}x{count}")
        p = data.get("p", "uniform")
        if isinstance(p, list) and len(p) != count:
            raise ConfigError(f"p: need {count} weights")
        try:
            leader = (LeaderProfile.from_list(data["leader"]["segments"])
                      if "segments" in data.get("leader", {}) else default_profile())
            events = [Event(float(e["time"]), e["kind"], e.get("index"),
                            VehicleParams(**e["params"]) if "params" in e else None)
                      for e in data.get("events", [])]
            cfg = cls(
                count=count, base=VehicleParams(**veh.get("params", {})),
                overrides=[dict(o) for o in veh.get("overrides", [])],
                formulation=data.get("formulation", "II"),
                mode=data.get("mode", "centralized"),
                string_stability=bool(data.get("string_stability", False)),
                gamma_bar=float(data.get("gamma_bar", 10.0)),
                cost_rule=rule,
                cost_matrix=None if matrix is None or rule == "distance"
                else [[float(x) for x in r] for r in matrix],
                c0=float(costs.get("c0", 1.0)),
                c0i=costs.get("c0i", 1.0), ci=costs.get("ci", 1.0),
                p=p,
                noise=NoiseSpec(int(noise.get("seed", 0)),
                                tuple(noise.get("mean_range", (-0.5, 0.5))),
                                tuple(noise.get("std_range", (0.0, 0.1))),
                                bool(noise.get("enabled", True))),
                leader=leader, events=events,
                dt=float(sim.get("dt", 1e-3)),
                horizon=float(sim.get("horizon", 10.0)),
                jitter=float(sim.get("jitter", 1.0)),
                output=str(data.get("output", "out")))
            cfg.costs()
            cfg.scenario()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
        return cls.from_dict({} if data is None else data)

    # serialization -------------------------------------------------------------
    def to_dict(self) -> dict:
        costs: dict[str, Any] = {"rule": self.cost_rule, "c0": self.c0,
                                 "c0i": self.c0i, "ci": self.ci}
        if self.cost_matrix is not None:
            costs["matrix"] = self.cost_matrix
        return {
            "vehicles": {"count": self.count, "params": self.base.to_dict(),
                         "overrides": [dict(o) for o in self.overrides]},
            "formulation": self.formulation,
            "mode": self.mode,
            "string_stability": self.string_stability,
            "gamma_bar": self.gamma_bar,
            "costs": costs,
            "p": self.p,
            "noise": self.noise.to_dict(),
            "leader": {"segments": self.leader.to_list()},
            "events": [e.to_dict() for e in self.events],
            "sim": {"dt": self.dt, "horizon": self.horizon, "jitter": self.jitter},
            "output": self.output,
        }

    def dump(self, path=None) -> str:
        text = yaml.safe_dump(self.to_dict(), sort_keys=False)
        if path is not None:
            Path(path).write_text(text)
        return text

    def synthesis_hash(self) -> str:
        """Hash of the fields that determine the synthesized design."""
        d = self.to_dict()
        sub = {k: d[k] for k in SYNTHESIS_KEYS}
        blob = json.dumps(sub, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    # derived objects -------------------------------------------------------------
    def vehicle_params(self) -> list[VehicleParams]:
        out = [self.base] * self.count
        for o in self.overrides:
            k = o["index"] - 1
            out[k] = dataclasses.replace(out[k], **{a: b for a, b in o.items()
                                                    if a != "index"})
        return out

    def costs(self) -> CostSpec:
        import numpy as np
        c = None if self.cost_matrix is None else np.array(self.cost_matrix)
        return CostSpec(c, self.c0, self.c0i, self.ci, self.gamma_bar)

    def p_values(self) -> list[float] | None:
        return None if self.p == "uniform" else [float(x) for x in self.p]

    def scenario(self) -> Scenario:
        return Scenario(self.vehicle_params(), self.leader, self.noise, self.dt,
                        self.horizon, self.jitter, list(self.events))
