"""Closed-loop platoon simulation, metrics and export."""

from .leader import ExtrapolationError, LeaderProfile, constant_profile, default_profile
from .noise import NoiseSource, NoiseSpec
from .scenario import Event, Scenario
from .engine import Layout, SimTrace, rk4_step, run, split_result
from .metrics import (DISSIPATION_TOL, UNDEFINED, DissipationCheck, TraceMetrics,
                      dissipation_check, metrics)
from .export import CSV_FIELDS, csv_header, read_csv, write_csv, write_plots


def leader_reference(t: float, profile: LeaderProfile | None = None) -> float:
    """Reference velocity at ``t`` (default profile unless given)."""
    return (profile or default_profile()).velocity(t)


__all__ = [
    "ExtrapolationError", "LeaderProfile", "constant_profile", "default_profile",
    "leader_reference", "NoiseSource", "NoiseSpec", "Event", "Scenario",
    "Layout", "SimTrace", "rk4_step", "run", "split_result",
    "DISSIPATION_TOL", "UNDEFINED", "DissipationCheck", "TraceMetrics",
    "dissipation_check", "metrics",
    "CSV_FIELDS", "csv_header", "read_csv", "write_csv", "write_plots",
]
