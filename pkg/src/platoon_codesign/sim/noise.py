"""Seeded Gaussian disturbances with per-vehicle hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NoiseSpec", "NoiseSource"]


@dataclass(frozen=True)
class NoiseSpec:
    """Disturbance model on the position, velocity and acceleration channels.

    Each vehicle draws a mean ``U(mean_range)`` and a standard deviation
    ``U(std_range)`` per channel once; samples are Gaussian and held
    constant over one integration step.
    """

    seed: int = 0
    mean_range: tuple[float, float] = (-0.5, 0.5)
    std_range: tuple[float, float] = (0.0, 0.1)
    enabled: bool = True

    def __post_init__(self):
        for name in ("mean_range", "std_range"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"{name} must be increasing")
        if self.std_range[0] < 0:
            raise ValueError("standard deviations must be nonnegative")

    def source(self, vid: int) -> "NoiseSource":
        """Independent stream for vehicle ``vid`` (stable under merges)."""
        return NoiseSource(self, vid)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "mean_range": list(self.mean_range),
                "std_range": list(self.std_range), "enabled": self.enabled}


class NoiseSource:
    def __init__(self, spec: NoiseSpec, vid: int):
        self.rng = np.random.default_rng([int(spec.seed), int(vid)])
        self.enabled = spec.enabled
        self.mean = self.rng.uniform(*spec.mean_range, size=3)
        self.std = self.rng.uniform(*spec.std_range, size=3)

    def sample(self) -> np.ndarray:
        if not self.enabled:
            return np.zeros(3)
        return self.rng.normal(self.mean, self.std)
