"""Trace metrics and the dissipation-inequality check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from ..codesign.types import SynthesisResult
from .engine import SimTrace

__all__ = ["TraceMetrics", "metrics", "DissipationCheck", "dissipation_check",
           "UNDEFINED", "DISSIPATION_TOL"]

UNDEFINED = None
DISSIPATION_TOL = 1e-4


@dataclass
class TraceMetrics:
    """Summary of one trace.

    ``empirical_gain`` is ``||e|| / ||w||`` and ``UNDEFINED`` when the
    disturbance vanishes. ``monotone_peaks`` is informational only.
    """

    error_norms: np.ndarray
    error_norm: float
    disturbance_norm: float
    empirical_gain: float | None
    min_spacing: float
    steady_state: np.ndarray
    peak_position_error: np.ndarray
    monotone_peaks: bool
    collisions: int
    max_abs_error: float

    def to_dict(self) -> dict:
        return {"error_norms": self.error_norms.tolist(),
                "error_norm": self.error_norm,
                "disturbance_norm": self.disturbance_norm,
                "empirical_gain": self.empirical_gain,
                "min_spacing": self.min_spacing,
                "steady_state": self.steady_state.tolist(),
                "peak_position_error": self.peak_position_error.tolist(),
                "monotone_peaks": self.monotone_peaks,
                "collisions": self.collisions,
                "max_abs_error": self.max_abs_error}


def _l2_sq(t: np.ndarray, y: np.ndarray) -> float:
    """Trapezoidal integral of ``|y|^2`` over the samples where ``y`` exists."""
    sq = np.nansum(y ** 2, axis=-1) if y.ndim > 1 else y ** 2
    ok = ~np.all(np.isnan(y), axis=-1) if y.ndim > 1 else ~np.isnan(y)
    if ok.sum() < 2:
        return 0.0
    return float(trapezoid(sq[ok], t[ok]))


def metrics(trace: SimTrace, window: float = 1.0) -> TraceMetrics:
    """Error norms, empirical gain, spacing and steady-state offsets.

    Errors use trapezoidal quadrature on the grid. The disturbance is held
    over each step, so its norm is the exact sum ``sum |w_k|^2 dt``.
    """
    t = trace.t
    n = trace.n_slots
    norms = np.array([np.sqrt(_l2_sq(t, trace.e[:, s])) for s in range(n)])
    e_norm = float(np.sqrt(np.sum(norms ** 2)))
    w = np.nan_to_num(trace.w[:-1])
    w_norm = float(np.sqrt(np.sum(w ** 2) * trace.dt)) if t.size > 1 else 0.0
    gain = UNDEFINED if w_norm == 0.0 else e_norm / w_norm
    xs = np.column_stack([trace.leader[:, 0], trace.x])
    spacing = np.inf
    order = [0] + list(trace.physical)
    for a, b in zip(order[:-1], order[1:]):
        gap = xs[:, a] - xs[:, b]
        if np.any(~np.isnan(gap)):
            spacing = min(spacing, float(np.nanmin(gap)))
    tail = t >= t[-1] - window
    steady = np.nanmean(trace.e[tail], axis=0) if tail.any() else np.zeros((n, 3))
    peaks = np.nanmax(np.abs(trace.e[:, :, 0]), axis=0)
    ph = [peaks[s - 1] for s in trace.physical]
    mono = bool(np.all(np.diff(ph) <= 1e-12))
    return TraceMetrics(norms, e_norm, w_norm, gain, spacing, steady, peaks,
                        mono, len(trace.collisions),
                        float(np.nanmax(np.abs(trace.e))) if trace.e.size else 0.0)


@dataclass
class DissipationCheck:
    """``V(t) - V(0) <= int_0^t s`` along a trace, ``s = sum g_i|w_i|^2 - |e|^2``.

    ``worst`` is the largest cumulative excess and ``worst_step`` the
    largest excess over a single step.
    """

    ok: bool
    worst: float
    worst_step: float
    storage: np.ndarray
    supply_integral: np.ndarray
    tol: float


def dissipation_check(trace: SimTrace, result: SynthesisResult,
                      tol: float = DISSIPATION_TOL) -> DissipationCheck:
    """Check the certified storage against the supply rate on a trace.

    The storage is ``V = sum p_i e_i^T S_i e_i`` with ``S_i`` the storage
    matrix of each follower's certificate and ``g_i`` its certified
    disturbance weight. Only traces without events are supported.
    """
    if len(trace.versions) != 1:
        raise ValueError("dissipation check needs a trace without events")
    follow = [f for s in result.segments for f in s.followers]
    slots = [trace.physical[f - 1] - 1 for f in follow]
    E = trace.e[:, slots]
    W = trace.w[:, slots]
    S = np.stack([c.storage for c in result.certs])
    V = np.einsum("i,tia,iab,tib->t", result.p, E, S, E)
    gw = result.supply_weights()
    w_sq = np.einsum("i,tia->t", gw, W[:-1] ** 2)
    dt = np.diff(trace.t)
    # held disturbance integrates exactly; the error part uses trapezoids
    supply = np.concatenate([[0.0], np.cumsum(w_sq * dt)]) - \
        cumulative_trapezoid(np.sum(E ** 2, axis=(1, 2)), trace.t, initial=0.0)
    excess = V - V[0] - supply
    worst = float(np.max(excess))
    # the same inequality over every single step is the sampled rate form
    worst_step = float(np.max(np.diff(V) - np.diff(supply), initial=-np.inf))
    return DissipationCheck(max(worst, worst_step) <= tol, worst, worst_step,
                            V, supply, tol)
