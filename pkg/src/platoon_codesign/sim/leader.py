"""Piecewise-linear reference velocity of the platoon leader."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["ExtrapolationError", "LeaderProfile", "default_profile",
           "constant_profile"]

CONTINUITY_TOL = 1e-9


class ExtrapolationError(ValueError):
    """Time outside the profile horizon."""


@dataclass(frozen=True)
class LeaderProfile:
    """Contiguous segments ``(t_start, t_end, c0, c1)`` with ``v = c0 + c1 t``.

    Acceleration is piecewise constant and taken right-continuous at the
    breakpoints; the last segment also covers its own end point.
    """

    segments: tuple[tuple[float, float, float, float], ...]

    def __post_init__(self):
        segs = tuple(tuple(float(x) for x in s) for s in self.segments)
        if not segs:
            raise ValueError("profile needs at least one segment")
        for k, (t0, t1, c0, c1) in enumerate(segs):
            if not t1 > t0:
                raise ValueError(f"segment {k} has non-positive length")
            if k:
                p0, p1, pc0, pc1 = segs[k - 1]
                if abs(p1 - t0) > CONTINUITY_TOL:
                    raise ValueError(f"segments {k - 1} and {k} are not contiguous")
                if abs(pc0 + pc1 * t0 - (c0 + c1 * t0)) > 1e-6:
                    raise ValueError(f"velocity jumps at t={t0}")
        object.__setattr__(self, "segments", segs)

    @property
    def t_start(self) -> float:
        return self.segments[0][0]

    @property
    def t_end(self) -> float:
        return self.segments[-1][1]

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([s[0] for s in self.segments[1:]])

    def _index(self, t: float) -> int:
        if not self.t_start - 1e-12 <= t <= self.t_end + 1e-12:
            raise ExtrapolationError(
                f"t={t} outside the profile horizon "
                f"[{self.t_start}, {self.t_end}]")
        starts = np.array([s[0] for s in self.segments])
        return max(int(np.searchsorted(starts, t, side="right")) - 1, 0)

    def velocity(self, t: float) -> float:
        _, _, c0, c1 = self.segments[self._index(t)]
        return c0 + c1 * t

    __call__ = velocity

    def acceleration(self, t: float) -> float:
        return self.segments[self._index(t)][3]

    def position(self, t: float, x0: float = 0.0) -> float:
        """Integral of the velocity from ``t_start``."""
        k = self._index(t)
        x = x0
        for t0, t1, c0, c1 in self.segments[:k]:
            x += c0 * (t1 - t0) + 0.5 * c1 * (t1 ** 2 - t0 ** 2)
        t0, _, c0, c1 = self.segments[k]
        return x + c0 * (t - t0) + 0.5 * c1 * (t ** 2 - t0 ** 2)

    def to_list(self) -> list[list[float]]:
        return [list(s) for s in self.segments]

    @classmethod
    def from_list(cls, segs: Sequence[Sequence[float]]) -> "LeaderProfile":
        return cls(tuple(tuple(s) for s in segs))


def default_profile() -> LeaderProfile:
    """Accelerate, cruise at 40 m/s, brake and settle at 20 m/s over 10 s."""
    return LeaderProfile(((0.0, 2.0, 0.0, 15.0),
                          (2.0, 4.0, 20.0, 5.0),
                          (4.0, 6.0, 40.0, 0.0),
                          (6.0, 8.0, 100.0, -10.0),
                          (8.0, 10.0, 20.0, 0.0)))


def constant_profile(speed: float, horizon: float = 10.0) -> LeaderProfile:
    return LeaderProfile(((0.0, float(horizon), float(speed), 0.0),))
