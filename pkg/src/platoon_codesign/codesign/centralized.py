"""Centralized controller and topology co-design."""

from __future__ import annotations

import time
from typing import Sequence

import numpy as np

from .. import lmi
from ..dissipativity import (InfeasibleError, InterconnectionSpec, SupplyRate,
                             SubsystemCertificate, is_hurwitz,
                             local_controller_synthesize, network_analyze)
from ..lmi import LmiProblem
from ..platoon import A_ERR, B_ERR, FORMULATIONS, VehicleParams, extract_gains, structure_mask
from .types import CostSpec, Segment, SynthesisResult, lemma1_check

__all__ = [
    "synthesize_locals",
    "centralized_codesign",
    "platoon_interconnection",
    "recertify",
    "prune",
    "PRUNE_TOL",
    "report_summary",
]

PRUNE_TOL = 1e-6


def report_summary(name: str, rep) -> dict:
    return {"name": name, "status": rep.status,
            "objective": None if not np.isfinite(rep.objective)
            else float(rep.objective),
            "wall_time": float(rep.wall_time),
            "solver_status": rep.solver_status}


def synthesize_locals(n: int, p: Sequence[float] | None = None,
                      **options) -> list[SubsystemCertificate]:
    """Local designs for ``n`` followers with weights ``p`` (default ``1/n``)."""
    p = np.full(n, 1.0 / n) if p is None else np.asarray(p, dtype=float)
    if p.size != n:
        raise ValueError("need one weight per follower")
    return [local_controller_synthesize(A_ERR, B_ERR, float(pi), **options)
            for pi in p]


def block_mask(formulation: str, n: int) -> np.ndarray:
    """Dense (3n, 3n) boolean mask of admissible K entries."""
    m = np.zeros((3 * n, 3 * n), bool)
    for i in range(n):
        for j in range(n):
            m[3 * i:3 * i + 3, 3 * j:3 * j + 3] = structure_mask(formulation, i == j)
    return m


def prune(K: np.ndarray, tol: float = PRUNE_TOL) -> np.ndarray:
    K = K.copy()
    K[np.abs(K) < tol] = 0.0
    return K


def platoon_interconnection(K_dense: np.ndarray) -> InterconnectionSpec:
    """Interconnection with ``eta = K e + w`` and ``z = e``."""
    n3 = K_dense.shape[0]
    n = n3 // 3
    return InterconnectionSpec(K_dense, np.eye(n3), np.eye(n3),
                               np.zeros((n3, n3)), (3,) * n, (3,) * n)


def recertify(K_dense: np.ndarray, certs: Sequence[SubsystemCertificate],
              gamma_weights: np.ndarray, p_hint: np.ndarray | None = None,
              backend: str = "clarabel") -> dict:
    """Network dissipativity analysis of a designed gain matrix."""
    rates = [c.rate() for c in certs]
    n3 = K_dense.shape[0]
    gw = np.repeat(np.asarray(gamma_weights, dtype=float), 3)
    Y = SupplyRate(np.diag(gw), np.zeros((n3, n3)), -np.eye(n3))
    norm = 1.0 if p_hint is None else min(1.0, 0.999 * float(np.sum(p_hint)))
    cert = network_analyze(rates, platoon_interconnection(K_dense), Y,
                           min_weight_sum=norm, backend=backend)
    return {"network_analysis": cert is not None,
            "network_margin": None if cert is None else float(cert.min_eig),
            "analysis_weight_sum": norm}


def centralized_codesign(params: Sequence[VehicleParams], formulation: str = "II",
                         costs: CostSpec | None = None,
                         p: Sequence[float] | None = None,
                         certs: Sequence[SubsystemCertificate] | None = None, *,
                         backend: str = "clarabel",
                         margin: float = lmi.DEFAULT_MARGIN,
                         prune_tol: float = PRUNE_TOL,
                         local_options: dict | None = None) -> SynthesisResult:
    """Design all interconnection gains and the topology in one LMI.

    Step 1 designs each local controller (unless ``certs`` is given);
    the global step then minimizes ``sum c_ij ||Q_ij||_1 + c0 * gamma~``
    subject to the network dissipativity LMI with ``Q = X_p^11 K``.

    Raises
    ------
    InfeasibleError
        With per-vehicle passivity-index box diagnostics in the message.
    """
    if formulation not in FORMULATIONS:
        raise ValueError(f"unknown formulation {formulation!r}")
    costs = CostSpec() if costs is None else costs
    N = len(params)
    if N == 0:
        raise ValueError("need at least one follower")
    t0 = time.perf_counter()
    reports: list[dict] = []
    if certs is None:
        certs = synthesize_locals(N, p, **(local_options or {}))
        reports.extend({"name": f"local{i + 1}", "status": "optimal",
                        "wall_time": c.solve_time} for i, c in enumerate(certs))
    certs = list(certs)
    nus = np.array([c.nu for c in certs])
    rhos = np.array([c.rho for c in certs])
    if np.any(nus >= 0):
        raise ValueError("every local certificate needs nu < 0")

    I3 = np.eye(3)
    n3 = 3 * N
    prob = LmiProblem("centralized", margin=margin)
    pv = prob.variable("p", (N, 1))
    gt = prob.scalar("gamma_tilde")
    mask = block_mask(formulation, N)
    Q = prob.variable("Q", (n3, n3), mask=mask)
    pe = [pv[i, 0] for i in range(N)]
    Xp11 = lmi.block_diag([pe[i] * (-nus[i] * I3) for i in range(N)])
    Xp22 = lmi.block_diag([pe[i] * (-rhos[i] * I3) for i in range(N)])
    X12 = np.kron(np.diag(-1.0 / (2.0 * nus)), I3)
    I = np.eye(n3)
    Z = np.zeros((n3, n3))
    F = lmi.bmat([
        [Xp11, Z, Q, Xp11],
        [Z, I, I, Z],
        [Q.T, I, -(Q.T @ X12) - X12.T @ Q - Xp22, -(X12.T @ Xp11)],
        [Xp11, Z, -(Xp11 @ X12), gt * I],
    ])
    prob.add_psd(F, name="network")
    prob.add_nonneg(pv, strict=True, name="p>0")
    prob.add_nonneg(gt, strict=True, name="gamma>0")
    prob.add_nonneg(costs.gamma_bar - gt, strict=True, name="gamma<gamma_bar")
    W = np.kron(costs.matrix(N), np.ones((3, 3))) * mask
    if np.any(W):
        prob.add_abs_penalty(Q, W)
    prob.minimize(costs.c0 * gt)
    rep = prob.solve(backend=backend)
    reports.append(report_summary("centralized", rep))
    if not rep.ok:
        diag = "; ".join(f"vehicle {i + 1}: lemma1={'ok' if lemma1_check(c) else 'FAIL'}"
                         f" nu={c.nu:.4g} rho={c.rho:.4g} p={c.p:.4g}"
                         for i, c in enumerate(certs))
        raise InfeasibleError(f"centralized co-design {rep.status}: {diag}", rep)

    p_opt = rep["p"].reshape(-1)
    g_opt = float(rep["gamma_tilde"][0, 0])
    xp11 = np.kron(np.diag(-p_opt * nus), I3)
    K = prune(np.linalg.solve(xp11, rep["Q"]), prune_tol)
    K[~mask] = 0.0
    Lbar = np.vstack([c.Lbar.reshape(1, 3) for c in certs])
    gains = extract_gains(K, formulation, Lbar)
    checks = recertify(K, certs, np.full(N, g_opt), p_opt, backend)
    acl = gains.closed_loop_matrix()
    checks["hurwitz"] = is_hurwitz(acl)
    checks["max_real_eig"] = float(np.linalg.eigvals(acl).real.max())
    checks["lemma1"] = all(lemma1_check(c) for c in certs)
    checks["wall_time"] = time.perf_counter() - t0
    return SynthesisResult(
        mode="centralized", formulation=formulation, params=list(params),
        gains=gains, certs=certs, p=p_opt, gamma_tilde=g_opt, costs=costs,
        segments=[Segment(0, list(range(1, N + 1)))],
        order=list(range(1, N + 1)), reports=reports, checks=checks)
