"""Sequential (vehicle-by-vehicle) co-design with merge and split support.

Each platoon segment keeps the principal block ``Psi`` of the global
certificate matrix ``W`` built so far. Adding vehicle ``i`` solves a small
LMI in its own blocks only, enforcing ``[[Psi, W_i^T], [W_i, W_ii]] >= eps I``;
by the block Sylvester criterion this keeps the whole ``W`` positive
definite.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import lmi
from ..blockmat import BlockMatrix, SylvesterState, sylvester_decompose
from ..dissipativity import (InfeasibleError, SubsystemCertificate, is_hurwitz,
                             local_controller_synthesize)
from ..lmi import LmiProblem
from ..platoon import A_ERR, B_ERR, FORMULATIONS, VehicleParams, extract_gains, structure_mask
from .centralized import PRUNE_TOL, recertify, report_summary
from .types import CostSpec, Segment, SynthesisResult, lemma1_check

__all__ = [
    "LedgerSegment",
    "PlatoonLedger",
    "StepResult",
    "decentralized_step",
    "decentralized_codesign",
    "merge",
    "split_ledger",
    "w_diag_block",
    "w_off_block",
]

Z3 = np.zeros((3, 3))
I3 = np.eye(3)


def w_diag_block(p: float, cert: SubsystemCertificate, K_ii: np.ndarray,
                 gamma_hat: float) -> np.ndarray:
    """Numeric diagonal certificate block ``W_ii`` (12 x 12)."""
    V = -p * cert.nu * I3
    R = -p * cert.rho * I3
    S = -1.0 / (2.0 * cert.nu) * I3
    Q = V @ K_ii
    return np.block([[V, Z3, Q, V],
                     [Z3, I3, I3, Z3],
                     [Q.T, I3, -Q.T @ S - S @ Q - R, -S @ V],
                     [V, Z3, -V @ S, gamma_hat * I3]])


def w_off_block(p_i: float, cert_i: SubsystemCertificate, K_ij: np.ndarray,
                p_j: float, cert_j: SubsystemCertificate,
                K_ji: np.ndarray) -> np.ndarray:
    """Numeric off-diagonal certificate block ``W_ij`` (12 x 12)."""
    Q_ij = -p_i * cert_i.nu * K_ij
    Q_ji = -p_j * cert_j.nu * K_ji
    S_i = -1.0 / (2.0 * cert_i.nu) * I3
    S_j = -1.0 / (2.0 * cert_j.nu) * I3
    return np.block([[Z3, Z3, Q_ij, Z3],
                     [Z3, Z3, Z3, Z3],
                     [Q_ji.T, Z3, -Q_ji.T @ S_j - S_i @ Q_ij, Z3],
                     [Z3, Z3, Z3, Z3]])


@dataclass
class LedgerSegment:
    """One platoon: leader id (0 = reference leader) and synthesized followers."""

    leader: int
    order: list[int] = field(default_factory=list)
    p: dict[int, float] = field(default_factory=dict)
    gamma_hat: dict[int, float] = field(default_factory=dict)
    K: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    K0: dict[int, np.ndarray] = field(default_factory=dict)
    psi: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    sylvester: SylvesterState = field(default_factory=SylvesterState)

    def block(self, a: int, b: int) -> np.ndarray:
        return self.K.get((a, b), Z3)


@dataclass
class StepResult:
    """Outcome of one sequential synthesis step (not yet committed)."""

    vid: int
    segment: int
    ok: bool
    p: float = np.nan
    gamma_hat: float = np.nan
    K_new: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    w_row: list[np.ndarray] = field(default_factory=list)
    w_diag: np.ndarray | None = None
    psi: np.ndarray | None = None
    report: dict = field(default_factory=dict)
    polished: bool = False


@dataclass
class PlatoonLedger:
    """State of a sequential co-design across one or more segments."""

    formulation: str
    costs: CostSpec
    string_stability: bool = False
    params: dict[int, VehicleParams] = field(default_factory=dict)
    certs: dict[int, SubsystemCertificate] = field(default_factory=dict)
    physical: list[int] = field(default_factory=list)
    segments: list[LedgerSegment] = field(default_factory=list)
    solve_log: list[tuple[str, int]] = field(default_factory=list)
    reports: list[dict] = field(default_factory=list)
    margin: float = lmi.DEFAULT_MARGIN
    backend: str = "clarabel"
    prune_tol: float = PRUNE_TOL
    local_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if not self.segments:
            self.segments.append(LedgerSegment(leader=0))

    # bookkeeping -------------------------------------------------------------
    def position(self, vid: int) -> int:
        """1-based physical position of vehicle ``vid``."""
        return self.physical.index(vid) + 1

    def next_id(self) -> int:
        return max(self.params, default=0) + 1

    def segment_of(self, vid: int) -> int:
        for k, seg in enumerate(self.segments):
            if vid in seg.order or vid == seg.leader:
                return k
        raise KeyError(f"vehicle {vid} is in no segment")

    def followers(self) -> list[int]:
        """Follower ids in physical order."""
        members = {v for s in self.segments for v in s.order}
        return [v for v in self.physical if v in members]

    def add_vehicle(self, params: VehicleParams, position: int | None = None,
                    p_local: float | None = None) -> int:
        """Register a vehicle and run its local design."""
        vid = self.next_id()
        pos = len(self.physical) + 1 if position is None else int(position)
        if not 1 <= pos <= len(self.physical) + 1:
            raise ValueError(f"insertion position {pos} out of range")
        p_local = 1.0 / max(len(self.physical) + 1, 1) if p_local is None \
            else p_local
        cert = local_controller_synthesize(A_ERR, B_ERR, p_local,
                                           backend=self.backend,
                                           **self.local_options)
        self.solve_log.append(("local", vid))
        self.reports.append({"name": f"local{vid}", "status": "optimal",
                             "wall_time": cert.solve_time})
        self.params[vid] = params
        self.certs[vid] = cert
        self.physical.insert(pos - 1, vid)
        return vid

    def commit(self, step: StepResult) -> None:
        """Append a feasible step and apply the leader-column updates."""
        if not step.ok:
            raise ValueError("cannot commit an infeasible step")
        seg = self.segments[step.segment]
        lam = seg.sylvester.push(step.w_row, step.w_diag)
        if lam <= seg.sylvester.pd_tol:
            raise InfeasibleError(
                f"step for vehicle {step.vid} breaks the prefix certificate "
                f"(pivot lambda_min={lam:.3e})")
        i = step.vid
        for (a, b), blk in step.K_new.items():
            seg.K[(a, b)] = blk
        k0 = step.K_new[(i, i)].copy()
        for j in seg.order:
            k0 = k0 + step.K_new.get((i, j), Z3)
            kji = step.K_new.get((j, i), Z3)
            if np.any(kji != 0.0):
                seg.K0[j] = seg.K0[j] + kji
        seg.K0[i] = k0
        seg.p[i] = step.p
        seg.gamma_hat[i] = step.gamma_hat
        seg.order.append(i)
        seg.psi = step.psi
        self.solve_log.append(("step", i))
        self.reports.append(step.report)

    def start_segment(self, leader: int) -> int:
        self.segments.append(LedgerSegment(leader=leader))
        return len(self.segments) - 1

    # certificates -------------------------------------------------------------
    def assemble_w(self, segment: int = 0) -> BlockMatrix:
        """Full certificate matrix of a segment in synthesis order."""
        seg = self.segments[segment]
        order = seg.order
        blocks = [[None] * len(order) for _ in order]
        for a, i in enumerate(order):
            for b, j in enumerate(order):
                if a == b:
                    blocks[a][b] = w_diag_block(seg.p[i], self.certs[i],
                                                seg.block(i, i), seg.gamma_hat[i])
                elif b < a:
                    blocks[a][b] = w_off_block(seg.p[i], self.certs[i],
                                               seg.block(i, j), seg.p[j],
                                               self.certs[j], seg.block(j, i))
                    blocks[b][a] = blocks[a][b].T
        return BlockMatrix(blocks)

    def verify(self) -> dict:
        """Sylvester verdict on every assembled segment matrix."""
        out = []
        for k, seg in enumerate(self.segments):
            if not seg.order:
                out.append(True)
                continue
            res = sylvester_decompose(self.assemble_w(k))
            out.append(res.positive)
        return {"sylvester": all(out), "segments": out}

    def rebuild_certificates(self) -> None:
        """Recompute every segment's stored prefix from its gain blocks."""
        for k, seg in enumerate(self.segments):
            state = SylvesterState()
            order = seg.order
            for a, i in enumerate(order):
                row = [w_off_block(seg.p[i], self.certs[i], seg.block(i, j),
                                   seg.p[j], self.certs[j], seg.block(j, i))
                       for j in order[:a]]
                state.push(row, w_diag_block(seg.p[i], self.certs[i],
                                             seg.block(i, i), seg.gamma_hat[i]))
            seg.sylvester = state
            seg.psi = self.assemble_w(k).to_dense() if order else np.zeros((0, 0))

    # results -------------------------------------------------------------------
    def to_result(self) -> SynthesisResult:
        follow = self.followers()
        idx = {v: n for n, v in enumerate(follow)}
        N = len(follow)
        K = np.zeros((N, N, 3, 3))
        K0 = np.zeros((N, 3, 3))
        p = np.zeros(N)
        gh = np.zeros(N)
        for seg in self.segments:
            for (a, b), blk in seg.K.items():
                K[idx[a], idx[b]] = blk
            for v in seg.order:
                K0[idx[v]] = seg.K0[v]
                p[idx[v]] = seg.p[v]
                gh[idx[v]] = seg.gamma_hat[v]
        certs = [self.certs[v] for v in follow]
        Lbar = np.vstack([c.Lbar.reshape(1, 3) for c in certs]) if certs \
            else np.zeros((0, 3))
        gains = extract_gains(K, self.formulation, Lbar, K0=K0)
        pos = {v: self.position(v) for v in self.physical}
        segments = [Segment(0 if s.leader == 0 else pos[s.leader],
                            sorted(pos[v] for v in s.order))
                    for s in self.segments]
        order = [pos[v] for s in self.segments for v in s.order]
        checks = self.verify()
        acl = gains.closed_loop_matrix()
        checks["hurwitz"] = is_hurwitz(acl) if N else True
        checks["max_real_eig"] = float(np.linalg.eigvals(acl).real.max()) if N else None
        checks["lemma1"] = all(lemma1_check(c) for c in certs)
        return SynthesisResult(
            mode="decentralized", formulation=self.formulation,
            params=[self.params[v] for v in self.physical], gains=gains,
            certs=certs, p=p, gamma_tilde=float(gh.max()) if N else 0.0,
            costs=self.costs, gamma_hat=gh, segments=segments, order=order,
            reports=list(self.reports), checks=checks,
            string_stability=self.string_stability)

    @classmethod
    def from_result(cls, result: SynthesisResult, rebuild: bool = True,
                    **options) -> "PlatoonLedger":
        """Reconstruct a ledger from a stored result.

        A centralized result gives a single segment whose certificate
        blocks all use the common ``gamma_tilde``. With ``rebuild=False``
        the stored prefixes are left empty, which is enough for
        :meth:`verify` on results that may not be certified.
        """
        weights = result.supply_weights()
        led = cls(result.formulation, result.costs, result.string_stability,
                  **options)
        led.segments = []
        n_total = len(result.params)
        led.physical = list(range(1, n_total + 1))
        led.params = {v: result.params[v - 1] for v in led.physical}
        follow = [f for s in result.segments for f in s.followers]
        idx = {v: n for n, v in enumerate(follow)}
        for v in follow:
            led.certs[v] = result.certs[idx[v]]
        for s in result.segments:
            seg = LedgerSegment(leader=s.leader)
            seg.order = [v for v in result.order if v in s.followers]
            for v in seg.order:
                seg.p[v] = float(result.p[idx[v]])
                seg.gamma_hat[v] = float(weights[idx[v]])
                seg.K0[v] = result.gains.K0[idx[v]].copy()
                for u in seg.order:
                    blk = result.gains.K[idx[v], idx[u]]
                    if u == v or np.any(blk != 0.0):
                        seg.K[(v, u)] = blk.copy()
            led.segments.append(seg)
        if rebuild:
            led.rebuild_certificates()
        return led


# a single step -----------------------------------------------------------

def _reduced_prefix(psi: np.ndarray, w_row: lmi.Affine, w_ii: lmi.Affine,
                    margin: float) -> lmi.Affine:
    """Equivalent small LMI for ``[[psi, w_row^T], [w_row, w_ii]] > 0``.

    Only the columns ``C`` of ``w_row`` that can be nonzero enter the
    Schur complement, so ``psi`` is replaced by ``inv(inv(psi - dI)[C, C])``
    and ``w_ii`` by ``w_ii - dI``. Feasibility of the result implies the
    full matrix exceeds ``dI``.
    """
    n = psi.shape[0]
    m = w_row.shape[0]
    entries = np.unique(np.concatenate([
        np.flatnonzero(np.diff(w_row.coeff.indptr)),
        np.flatnonzero(w_row.const)]))
    cols = np.unique(entries % n)
    lam = np.linalg.eigvalsh(psi)[0]
    shift = min(margin, 0.5 * lam)
    pinv = np.linalg.inv(psi - shift * np.eye(n))
    s = np.linalg.inv(pinv[np.ix_(cols, cols)])
    s = 0.5 * (s + s.T)
    sel = np.zeros((n, cols.size))
    sel[cols, np.arange(cols.size)] = 1.0
    w_c = w_row @ sel
    return lmi.bmat([[s, w_c.T], [w_c, w_ii - shift * np.eye(m)]])

def _step_problem(ledger: PlatoonLedger, seg: LedgerSegment, i: int,
                  support: dict | None, relax: float = 1.0):
    costs = ledger.costs
    cert = ledger.certs[i]
    prior = list(seg.order)
    prob = LmiProblem(f"step{i}", margin=ledger.margin)
    p = prob.scalar("p")
    g = prob.scalar("gamma_hat")
    f = ledger.formulation

    def qvar(name, a, b):
        mask = structure_mask(f, a == b)
        if support is not None:
            mask = mask & support.get((a, b), np.zeros((3, 3), bool))
        return prob.variable(name, (3, 3), mask=mask)

    Qii = qvar("Q_ii", i, i)
    V = p * (-cert.nu * I3)
    R = p * (-cert.rho * I3)
    S = -1.0 / (2.0 * cert.nu) * I3
    Wii = lmi.bmat([[V, Z3, Qii, V],
                    [Z3, I3, I3, Z3],
                    [Qii.T, I3, -(Qii.T @ S) - S @ Qii - R, -(S @ V)],
                    [V, Z3, -(V @ S), g * I3]])
    row = []
    qs = {}
    pos_i = ledger.position(i)
    for j in prior:
        Qij = qvar(f"Q_{i}_{j}", i, j)
        Qji = qvar(f"Q_{j}_{i}", j, i)
        qs[j] = (Qij, Qji)
        Sj = -1.0 / (2.0 * ledger.certs[j].nu) * I3
        row.append(lmi.bmat([[Z3, Z3, Qij, Z3],
                             [Z3, Z3, Z3, Z3],
                             [Qji.T, Z3, -(Qji.T @ Sj) - S @ Qij, Z3],
                             [Z3, Z3, Z3, Z3]]))
        pos_j = ledger.position(j)
        for q, c in ((Qij, costs.pair(pos_i, pos_j)), (Qji, costs.pair(pos_j, pos_i))):
            if c > 0:
                prob.add_abs_penalty(q, c)
    if prior:
        Wrow = lmi.hstack(row)
        big = _reduced_prefix(seg.psi, Wrow, Wii, ledger.margin)
    else:
        big = Wii
    prob.add_psd(big, name="prefix")
    prob.add_nonneg(p, strict=True, name="p>0")
    prob.add_nonneg(g, strict=True, name="gamma>0")
    if ledger.string_stability and seg.gamma_hat:
        bound = min(seg.gamma_hat.values())
    else:
        bound = costs.gamma_bar
    bound *= relax
    prob.add_nonneg(bound - g, strict=True, name="gamma<bound")
    prob.minimize(costs.c0_of(pos_i - 1) * g)
    ci = costs.ci_of(pos_i - 1)
    if ci > 0:
        prob.add_abs_penalty(g - cert.gamma_tilde, ci)
    return prob, Qii, qs


def decentralized_step(ledger: PlatoonLedger, vid: int,
                       segment: int = -1, relax: float = 1.0) -> StepResult:
    """Synthesize the blocks coupling vehicle ``vid`` to its segment.

    ``relax`` scales the upper bound on ``gamma_hat``. The ledger is not
    modified; pass the result to :meth:`PlatoonLedger.commit`.
    """
    seg_idx = segment % len(ledger.segments)
    seg = ledger.segments[seg_idx]
    if vid in seg.order:
        raise ValueError(f"vehicle {vid} already synthesized")
    cert = ledger.certs[vid]
    t0 = time.perf_counter()
    prob, Qii, qs = _step_problem(ledger, seg, vid, None, relax)
    rep = prob.solve(backend=ledger.backend, chordal=False)
    if not rep.ok:
        return StepResult(vid, seg_idx, False,
                          report=report_summary(f"step{vid}", rep))

    def gains_from(rep, Qii, qs):
        x = rep.x
        pv = float(rep["p"][0, 0])
        out = {(vid, vid): Qii.value(x) / (-pv * cert.nu)}
        for j, (Qij, Qji) in qs.items():
            out[(vid, j)] = Qij.value(x) / (-pv * cert.nu)
            out[(j, vid)] = Qji.value(x) / (-seg.p[j] * ledger.certs[j].nu)
        for k in out:
            blk = out[k]
            blk[np.abs(blk) < ledger.prune_tol] = 0.0
        return pv, float(rep["gamma_hat"][0, 0]), out

    def numeric(pv, gh, K_new):
        w_row = [w_off_block(pv, cert, K_new[(vid, j)], seg.p[j],
                             ledger.certs[j], K_new[(j, vid)]) for j in seg.order]
        w_ii = w_diag_block(pv, cert, K_new[(vid, vid)], gh)
        if seg.order:
            wr = np.hstack(w_row)
            psi = np.block([[seg.psi, wr.T], [wr, w_ii]])
        else:
            psi = w_ii
        return w_row, w_ii, 0.5 * (psi + psi.T)

    pv, gh, K_new = gains_from(rep, Qii, qs)
    w_row, w_ii, psi = numeric(pv, gh, K_new)
    polished = False
    if np.linalg.eigvalsh(psi)[0] <= seg.sylvester.pd_tol:
        # pruning broke the certificate: re-solve on the pruned support
        support = {k: v != 0.0 for k, v in K_new.items()}
        prob, Qii, qs = _step_problem(ledger, seg, vid, support, relax)
        rep = prob.solve(backend=ledger.backend, chordal=False)
        if not rep.ok:
            return StepResult(vid, seg_idx, False,
                              report=report_summary(f"step{vid}", rep))
        pv, gh, K_new = gains_from(rep, Qii, qs)
        w_row, w_ii, psi = numeric(pv, gh, K_new)
        polished = True
    summary = report_summary(f"step{vid}", rep)
    summary["wall_time"] = time.perf_counter() - t0
    return StepResult(vid, seg_idx, True, pv, gh, K_new, w_row, w_ii, psi,
                      summary, polished)


# pipelines -----------------------------------------------------------------

def decentralized_codesign(params: Sequence[VehicleParams],
                           formulation: str = "II",
                           costs: CostSpec | None = None,
                           p: Sequence[float] | None = None, *,
                           string_stability: bool = False,
                           backend: str = "clarabel",
                           margin: float = lmi.DEFAULT_MARGIN,
                           local_options: dict | None = None,
                           retries: int = 0, relax: float = 2.0,
                           ) -> tuple[SynthesisResult, PlatoonLedger]:
    """Design the platoon one vehicle at a time.

    An infeasible step is retried up to ``retries`` times with the gain
    bound scaled by ``relax`` each time; if it still fails, the vehicle
    becomes the leader of a new segment and synthesis continues behind it.
    """
    costs = CostSpec() if costs is None else costs
    N = len(params)
    p = np.full(N, 1.0 / N) if p is None else np.asarray(p, dtype=float)
    t0 = time.perf_counter()
    ledger = PlatoonLedger(formulation, costs, string_stability,
                           margin=margin, backend=backend,
                           local_options=dict(local_options or {}))
    for k, prm in enumerate(params):
        vid = ledger.add_vehicle(prm, p_local=float(p[k]))
        step = decentralized_step(ledger, vid)
        for r in range(retries):
            if step.ok:
                break
            step = decentralized_step(ledger, vid, relax=relax ** (r + 1))
        if step.ok:
            ledger.commit(step)
            continue
        ledger.reports.append(step.report)
        if not ledger.segments[-1].order:
            raise InfeasibleError(
                f"vehicle {vid} is infeasible even without neighbours "
                f"(lemma1={'ok' if lemma1_check(ledger.certs[vid]) else 'FAIL'})")
        ledger.start_segment(vid)
    result = ledger.to_result()
    gw = result.supply_weights()
    K = result.gains.dense_K()
    result.checks.update(recertify(K, result.certs, gw, result.p, backend))
    result.checks["wall_time"] = time.perf_counter() - t0
    result.checks["splits"] = len(ledger.segments) - 1
    return result, ledger


def merge(ledger: PlatoonLedger, params: VehicleParams,
          position: int | None = None) -> PlatoonLedger:
    """Return a new ledger with one more vehicle at physical ``position``.

    Runs exactly one local design and one sequential step. Stored blocks
    between existing vehicles are untouched; only their leader blocks
    change by the new coupling blocks.

    Raises
    ------
    InfeasibleError
        When the step has no solution; ``ledger`` is unchanged.
    """
    new = copy.deepcopy(ledger)
    pos = len(new.physical) + 1 if position is None else int(position)
    if pos <= 1:
        seg = 0
    else:
        seg = new.segment_of(new.physical[pos - 2])
    vid = new.add_vehicle(params, pos, p_local=1.0 / len(new.followers() + [0]))
    step = decentralized_step(new, vid, seg)
    if not step.ok:
        raise InfeasibleError(f"merge of vehicle at position {pos} rejected")
    new.commit(step)
    return new


def split_ledger(ledger: PlatoonLedger, position: int) -> PlatoonLedger:
    """Detach the vehicle at ``position``; it leads the vehicles behind it.

    Both resulting segments keep principal submatrices of the original
    certificate, and each remaining leader block absorbs the couplings
    that no longer exist.
    """
    new = copy.deepcopy(ledger)
    vid = new.physical[position - 1]
    k = new.segment_of(vid)
    seg = new.segments[k]
    if vid == seg.leader:
        raise ValueError("vehicle already leads a segment")
    behind = {v for v in new.physical[position:] if v in seg.order}
    front_order = [v for v in seg.order if v not in behind and v != vid]
    back_order = [v for v in seg.order if v in behind]

    def restrict(order, leader):
        s = LedgerSegment(leader=leader)
        s.order = list(order)
        keep = set(order)
        for v in order:
            s.p[v] = seg.p[v]
            s.gamma_hat[v] = seg.gamma_hat[v]
            s.K0[v] = seg.block(v, v) + sum(
                (seg.block(v, u) for u in order if u != v), Z3)
        s.K = {key: blk for key, blk in seg.K.items()
               if key[0] in keep and key[1] in keep}
        return s

    new.segments[k] = restrict(front_order, seg.leader)
    new.segments.insert(k + 1, restrict(back_order, vid))
    new.rebuild_certificates()
    return new
