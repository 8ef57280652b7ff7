"""Fixed-step closed-loop simulation of the nonlinear platoon."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from ..codesign.decentralized import PlatoonLedger, merge, split_ledger
from ..codesign.types import Segment, SynthesisResult
from ..dissipativity import InfeasibleError, local_controller_synthesize
from ..platoon import (A_ERR, B_ERR, VehicleParams, control_all, drift,
                       extract_gains, linearizing_input)
from .scenario import Event, Scenario

__all__ = ["SimTrace", "Layout", "run", "split_result", "rk4_step"]


@dataclass
class SimTrace:
    """Sampled trajectories; one column per vehicle slot.

    Slots are numbered by creation: the initial vehicles in physical order,
    then merged vehicles. Entries are NaN while a slot does not exist.
    ``w`` holds the disturbance acting over the step that starts at each
    sample (last row is zero).
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    e: np.ndarray
    g: np.ndarray
    u: np.ndarray
    w: np.ndarray
    leader: np.ndarray
    labels: list[str]
    events: list[dict] = field(default_factory=list)
    versions: list[tuple[float, SynthesisResult]] = field(default_factory=list)
    physical: list[int] = field(default_factory=list)
    aborted: bool = False
    diagnostic: str = ""
    wall_time: float = 0.0

    @property
    def n_slots(self) -> int:
        return self.x.shape[1]

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    @property
    def collisions(self) -> list[dict]:
        return [ev for ev in self.events if ev["kind"] == "collision"]


@dataclass
class Layout:
    """Arrangement of the platoon used by the right-hand side.

    State rows: 0 is the reference leader, slot ``s`` is row ``s + 1``.
    """

    result: SynthesisResult
    physical: list[int]
    f_rows: np.ndarray
    lead_rows: np.ndarray
    sl_rows: np.ndarray
    sl_gains: np.ndarray
    d: np.ndarray
    plant: SimpleNamespace
    active: np.ndarray
    length: np.ndarray

    @classmethod
    def build(cls, result: SynthesisResult, physical: list[int],
              slot_params: dict[int, VehicleParams], n_rows: int,
              local_gain) -> "Layout":
        follow = [f for s in result.segments for f in s.followers]
        if len(follow) != result.gains.n:
            raise ValueError("segments do not match the gain set")
        if max(follow + [s.leader for s in result.segments]) > len(physical):
            raise ValueError("result refers to more vehicles than present")
        row = {pos: physical[pos - 1] + 1 for pos in range(1, len(physical) + 1)}
        row[0] = 0
        f_rows, lead_rows = [], []
        for s in result.segments:
            for f in s.followers:
                f_rows.append(row[f])
                lead_rows.append(row[s.leader])
        sl = [row[s.leader] for s in result.segments if s.leader != 0]
        d = np.full(n_rows, np.nan)
        d[0] = 0.0
        length = np.full(n_rows, np.nan)
        acc = 0.0
        for slot in physical:
            prm = slot_params[slot]
            acc += prm.L + prm.delta
            d[slot + 1] = acc
            length[slot + 1] = prm.L
        active = np.array([s + 1 for s in physical], dtype=int)
        names = ("m", "tau", "A_f", "C_d", "C_r", "rho_air")
        plant = SimpleNamespace(**{
            k: np.array([getattr(slot_params[s], k) for s in physical])
            for k in names})
        return cls(result, list(physical), np.array(f_rows, dtype=int),
                   np.array(lead_rows, dtype=int), np.array(sl, dtype=int),
                   np.array([local_gain(r - 1) for r in sl]).reshape(-1, 3),
                   d, plant, active, length)

    # signals -------------------------------------------------------------------
    def follower_errors(self, X: np.ndarray, offsets: bool = True) -> np.ndarray:
        """Errors of every follower, in gain order."""
        gains = self.result.gains
        xd = X[:, 0] + (self.d if offsets else 0.0)
        f, ld = self.f_rows, self.lead_rows
        E = np.empty((f.size, 3))
        if gains.formulation == "I":
            kb = gains.kbar
            kf = kb[:, 1:]
            s = kb.sum(axis=1)
            for c, col in ((0, xd), (1, X[:, 1])):
                E[:, c] = s * col[f] - kb[:, 0] * col[ld] - kf @ col[f]
        else:
            E[:, 0] = xd[f] - xd[ld]
            E[:, 1] = X[f, 1] - X[ld, 1]
        E[:, 2] = X[f, 2] - X[ld, 2]
        return E

    def leader_errors(self, X: np.ndarray) -> np.ndarray:
        r = self.sl_rows
        return np.column_stack([X[r, 0] - X[0, 0] + self.d[r],
                                X[r, 1] - X[0, 1], X[r, 2] - X[0, 2]])

    def inputs(self, X: np.ndarray) -> np.ndarray:
        """Virtual input ``g`` for every state row (0 for the reference)."""
        g = np.zeros(X.shape[0])
        if self.f_rows.size:
            g[self.f_rows] = control_all(self.result.gains, self.follower_errors(X))
        if self.sl_rows.size:
            g[self.sl_rows] = np.einsum("ij,ij->i", self.sl_gains,
                                        self.leader_errors(X))
        return g

    def rhs(self, X: np.ndarray, D: np.ndarray) -> tuple[np.ndarray, np.ndarray,
                                                          np.ndarray]:
        act = self.active
        g = self.inputs(X)
        v = X[act, 1]
        a = X[act, 2]
        u = linearizing_input(self.plant, v, a, g[act])
        dX = np.zeros_like(X)
        dX[0] = (X[0, 1], X[0, 2], 0.0)
        dX[act, 0] = v + D[act, 0]
        dX[act, 1] = a + D[act, 1]
        dX[act, 2] = (drift(self.plant, v, a) + u / (self.plant.m * self.plant.tau)
                      + D[act, 2])
        uu = np.full(X.shape[0], np.nan)
        uu[act] = u
        return dX, g, uu


def rk4_step(f, X: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(X)
    k2 = f(X + 0.5 * dt * k1)
    k3 = f(X + 0.5 * dt * k2)
    k4 = f(X + dt * k3)
    return X + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def split_result(result: SynthesisResult, position: int) -> SynthesisResult:
    """Make the follower at ``position`` lead the followers behind it.

    Gains keep their principal blocks; couplings across the cut are
    dropped and folded into the leader blocks.
    """
    follow = [f for s in result.segments for f in s.followers]
    if position not in follow:
        raise ValueError(f"position {position} is not a follower")
    segs = []
    for s in result.segments:
        if position in s.followers:
            segs.append(Segment(s.leader, [f for f in s.followers if f < position]))
            segs.append(Segment(position, [f for f in s.followers if f > position]))
        else:
            segs.append(Segment(s.leader, list(s.followers)))
    seg_of = {f: k for k, s in enumerate(segs) for f in s.followers}
    keep = [follow.index(f) for s in segs for f in s.followers]
    K = result.gains.K[np.ix_(keep, keep)].copy()
    kept = [follow[k] for k in keep]
    for a, fa in enumerate(kept):
        for b, fb in enumerate(kept):
            if seg_of[fa] != seg_of[fb]:
                K[a, b] = 0.0
    K0 = np.stack([K[a].sum(axis=0) for a in range(len(keep))]) if keep \
        else np.zeros((0, 3, 3))
    gains = extract_gains(K, result.gains.formulation, result.gains.Lbar[keep],
                          K0=K0)
    return dataclasses.replace(
        result, gains=gains, certs=[result.certs[k] for k in keep],
        p=result.p[keep],
        gamma_hat=None if result.gamma_hat is None else result.gamma_hat[keep],
        segments=segs, order=[o for o in result.order if o != position],
        checks={})


def run(scenario: Scenario, result: SynthesisResult,
        ledger: PlatoonLedger | None = None) -> SimTrace:
    """Simulate ``scenario`` under the gains of ``result``.

    Merge events need a decentralized design; the ledger is rebuilt from
    ``result`` when not given. The plant is frozen while a merge is
    synthesized.
    """
    t_wall = time.perf_counter()
    n0 = len(scenario.params)
    if len(result.params) != n0:
        raise ValueError(f"result has {len(result.params)} vehicles, "
                         f"scenario has {n0}")
    merges = [ev for ev in scenario.events if ev.kind == "merge"]
    if merges and result.mode != "decentralized":
        raise ValueError("merge events need a decentralized design")
    if scenario.events and result.mode == "decentralized" and ledger is None:
        ledger = PlatoonLedger.from_result(result)
    n_slots = n0 + len(merges)
    n_rows = n_slots + 1
    dt = scenario.dt
    n_steps = scenario.n_steps
    lead = scenario.leader

    slot_params = {s: scenario.params[s] for s in range(n0)}
    physical = list(range(n0))
    lid_slot = {s + 1: s for s in range(n0)}
    noise = {s: scenario.noise.source(s + 1) for s in range(n0)}
    local_cache: dict[int, np.ndarray] = {}

    def local_gain(slot: int) -> np.ndarray:
        if slot not in local_cache:
            cert = local_controller_synthesize(A_ERR, B_ERR, 1.0 / max(len(physical), 1))
            local_cache[slot] = cert.Lbar.reshape(3)
        return local_cache[slot]

    layout = Layout.build(result, physical, slot_params, n_rows, local_gain)
    versions = [(0.0, result)]

    # initial state
    X = np.full((n_rows, 3), np.nan)
    X[0] = (lead.position(lead.t_start), lead.velocity(lead.t_start), 0.0)
    rng = np.random.default_rng([int(scenario.noise.seed), 0])
    jit = rng.uniform(-1.0, 1.0, size=n0) * scenario.jitter
    x_prev = X[0, 0]
    for s in range(n0):
        prm = slot_params[s]
        x_prev = x_prev - (prm.L + prm.delta) - jit[s]
        X[s + 1] = (x_prev, X[0, 1], 0.0)

    shape = (n_steps + 1, n_slots)
    rec = {k: np.full(shape, np.nan) for k in ("x", "v", "a", "g", "u")}
    rec_e = np.full(shape + (3,), np.nan)
    rec_w = np.full(shape + (3,), np.nan)
    rec_lead = np.full((n_steps + 1, 3), np.nan)
    t_grid = lead.t_start + dt * np.arange(n_steps + 1)
    events: list[dict] = []
    pending = list(scenario.events)
    in_contact: set[tuple[int, int]] = set()
    aborted, diag = False, ""

    def record(k: int, X: np.ndarray, D: np.ndarray | None, jump: float):
        slots = np.array(physical, dtype=int)
        rows = slots + 1
        rec["x"][k, slots] = X[rows, 0]
        rec["v"][k, slots] = X[rows, 1]
        rec["a"][k, slots] = X[rows, 2]
        rec_lead[k] = X[0]
        g = layout.inputs(X)
        rec["g"][k, slots] = g[rows]
        rec["u"][k, slots] = linearizing_input(layout.plant, X[rows, 1],
                                               X[rows, 2], g[rows])
        if layout.f_rows.size:
            rec_e[k, layout.f_rows - 1] = layout.follower_errors(X)
        if layout.sl_rows.size:
            rec_e[k, layout.sl_rows - 1] = layout.leader_errors(X)
        if D is None:
            rec_w[k, slots] = 0.0
            return
        # disturbance of each error system over the coming step
        lead_da = np.zeros(n_rows)
        lead_da[0] = jump / dt
        if layout.sl_rows.size:
            lead_da[layout.sl_rows] = g[layout.sl_rows] + D[layout.sl_rows, 2]
        if layout.f_rows.size:
            W = layout.follower_errors(D, offsets=False)
            W[:, 2] = D[layout.f_rows, 2] - lead_da[layout.lead_rows]
            rec_w[k, layout.f_rows - 1] = W
        if layout.sl_rows.size:
            r = layout.sl_rows
            rec_w[k, r - 1] = np.column_stack([D[r, 0], D[r, 1],
                                               D[r, 2] - lead_da[0]])

    k = 0
    for k in range(n_steps):
        t_k = t_grid[k]
        while pending and pending[0].time <= t_k + 1e-12:
            ev = pending.pop(0)
            try:
                if ev.kind == "merge":
                    slot = len(slot_params)
                    pos = len(physical) + 1 if ev.index is None else int(ev.index)
                    ledger = merge(ledger, ev.params, pos)
                    new_lid = ledger.physical[pos - 1]
                    lid_slot[new_lid] = slot
                    slot_params[slot] = ev.params
                    noise[slot] = scenario.noise.source(slot + 1)
                    ahead = 0 if pos == 1 else physical[pos - 2] + 1
                    gap = ev.params.L + ev.params.delta
                    if pos <= len(physical):
                        behind = physical[pos - 1] + 1
                        xn = 0.5 * (X[ahead, 0] + X[behind, 0])
                    else:
                        xn = X[ahead, 0] - gap
                    X[slot + 1] = (xn, X[ahead, 1], X[ahead, 2] if ahead else 0.0)
                    physical = [lid_slot[l] for l in ledger.physical]
                    result = ledger.to_result()
                else:
                    if ledger is not None:
                        ledger = split_ledger(ledger, int(ev.index))
                        result = ledger.to_result()
                    else:
                        result = split_result(result, int(ev.index))
                layout = Layout.build(result, physical, slot_params, n_rows,
                                      local_gain)
                versions.append((float(t_k), result))
                events.append({"time": float(t_k), "kind": ev.kind,
                               "index": ev.index, "version": len(versions) - 1})
            except (InfeasibleError, ValueError) as exc:
                events.append({"time": float(t_k), "kind": f"{ev.kind}_rejected",
                               "index": ev.index, "reason": str(exc)})

        jump = lead.acceleration(min(t_k + 0.5 * dt, lead.t_end)) - X[0, 2]
        D = np.zeros((n_rows, 3))
        for s in physical:
            D[s + 1] = noise[s].sample()
        record(k, X, D, jump)
        X[0, 2] += jump

        def f(Z):
            return layout.rhs(Z, D)[0]

        X = rk4_step(f, X, dt)
        act = layout.active
        if not np.all(np.isfinite(X[act])) or \
                np.max(np.abs(X[act])) > scenario.divergence_bound:
            aborted = True
            diag = f"state diverged at t={t_grid[k + 1]:.4f}"
            k += 1
            break
        # spacing check in physical order
        rows = [0] + [s + 1 for s in physical]
        for ra, rb in zip(rows[:-1], rows[1:]):
            pair = (ra - 1, rb - 1)
            if X[ra, 0] - X[rb, 0] <= layout.length[rb]:
                if pair not in in_contact:
                    in_contact.add(pair)
                    events.append({"time": float(t_grid[k + 1]), "kind": "collision",
                                   "pair": [pair[0] + 1, pair[1] + 1]})
            else:
                in_contact.discard(pair)
    else:
        k = n_steps
    if not aborted:
        record(k, X, None, 0.0)
    last = k if aborted else k + 1
    labels = [f"veh{s + 1}" for s in range(n_slots)]
    return SimTrace(t_grid[:last], rec["x"][:last], rec["v"][:last],
                    rec["a"][:last], rec_e[:last], rec["g"][:last],
                    rec["u"][:last], rec_w[:last], rec_lead[:last], labels,
                    events, versions, [s + 1 for s in physical], aborted, diag,
                    time.perf_counter() - t_wall)
