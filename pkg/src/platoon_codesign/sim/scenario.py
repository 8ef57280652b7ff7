"""Simulation scenario and scripted events."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..platoon import VehicleParams
from .leader import LeaderProfile, default_profile
from .noise import NoiseSpec

__all__ = ["Event", "Scenario"]


@dataclass(frozen=True)
class Event:
    """A merge (new vehicle at physical ``index``) or a split at ``index``."""

    time: float
    kind: str
    index: int | None = None
    params: VehicleParams | None = None

    def __post_init__(self):
        if self.kind not in ("merge", "split"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind == "split" and self.index is None:
            raise ValueError("a split needs the index of the new leader")
        if self.kind == "merge" and self.params is None:
            object.__setattr__(self, "params", VehicleParams())

    def to_dict(self) -> dict:
        d = {"time": self.time, "kind": self.kind}
        if self.index is not None:
            d["index"] = self.index
        if self.kind == "merge":
            d["params"] = self.params.to_dict()
        return d


@dataclass
class Scenario:
    """Initial platoon, reference, disturbances and integration settings.

    Initial positions are ``x_i = x_{i-1} - (L + delta) - U(-jitter, jitter)``
    behind the leader at ``x_0 = 0``; velocities start at the reference
    value and accelerations at zero.
    """

    params: list[VehicleParams]
    leader: LeaderProfile = field(default_factory=default_profile)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    dt: float = 1e-3
    horizon: float = 10.0
    jitter: float = 1.0
    events: list[Event] = field(default_factory=list)
    divergence_bound: float = 1e6

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0):
            raise ValueError("step and horizon must be positive")
        if self.horizon > self.leader.t_end - self.leader.t_start + 1e-9:
            raise ValueError("horizon exceeds the leader profile")
        for ev in self.events:
            if not 0.0 <= ev.time <= self.horizon:
                raise ValueError(f"event at t={ev.time} outside the horizon")
        self.events = sorted(self.events, key=lambda e: e.time)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))
