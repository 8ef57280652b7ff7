"""Longitudinal vehicle model, error formulations and gain bookkeeping.

Vehicles are numbered ``0..N`` with ``0`` the leader. Per-follower arrays
are indexed ``0..N-1`` for followers ``1..N``. Gain blocks act on the error
state ``e_i = (x~_i, v~_i, a~_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "A_ERR",
    "B_ERR",
    "VehicleParams",
    "VehicleState",
    "ErrorState",
    "PlatoonGeometry",
    "GainSet",
    "StructureError",
    "TopologyError",
    "drift",
    "linearizing_input",
    "geometry",
    "error_state_I",
    "error_state_II",
    "errors_all",
    "control",
    "control_all",
    "structure_mask",
    "check_structure",
    "extract_gains",
    "FORMULATIONS",
]

FORMULATIONS = ("I", "II")
STRUCTURE_TOL = 1e-9

# triple-integrator error dynamics
A_ERR = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
B_ERR = np.array([[0.0], [0.0], [1.0]])


class StructureError(ValueError):
    """A gain block has a nonzero entry outside its formulation's mask."""


class TopologyError(KeyError):
    """A control law needs an error state that is not available."""


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of one vehicle (SI units)."""

    m: float = 1500.0
    tau: float = 0.25
    A_f: float = 2.2
    C_d: float = 0.35
    C_r: float = 0.067
    rho_air: float = 0.78
    L: float = 2.5
    delta: float = 5.0

    def __post_init__(self):
        for name in ("m", "tau", "A_f", "rho_air", "L", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("m", "tau", "A_f", "C_d", "C_r", "rho_air", "L", "delta")}


@dataclass
class VehicleState:
    x: float
    v: float
    a: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.v, self.a])


@dataclass
class ErrorState:
    x: float
    v: float
    a: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.v, self.a])

    @classmethod
    def from_array(cls, e) -> "ErrorState":
        e = np.asarray(e, dtype=float).reshape(3)
        return cls(float(e[0]), float(e[1]), float(e[2]))


def drift(params: VehicleParams, v, a):
    """Engine and resistance drift term of the acceleration dynamics."""
    p = params
    drag = p.rho_air * p.A_f * p.C_d * v / (2.0 * p.m) * (v + 2.0 * p.tau * a)
    return -(a + p.C_r + drag) / p.tau


def linearizing_input(params: VehicleParams, v, a, g):
    """Actuator input that turns the plant into a triple integrator in ``g``."""
    return params.m * params.tau * (-drift(params, v, a) + g)


@dataclass(frozen=True)
class PlatoonGeometry:
    """Cumulative desired offsets ``d[0] = 0 < d[1] < ... < d[N]``."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d[0] != 0.0 or np.any(np.diff(d) <= 0):
            raise ValueError("offsets must start at 0 and strictly increase")
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.d.size - 1

    def d_ij(self, i: int, j: int) -> float:
        return float(self.d[i] - self.d[j])


def geometry(params: Sequence[VehicleParams]) -> PlatoonGeometry:
    """Offsets ``d_m = sum_{k<=m} (L_k + delta_k)`` for followers ``1..N``."""
    if len(params) == 0:
        raise ValueError("need at least one follower")
    steps = [p.L + p.delta for p in params]
    return PlatoonGeometry(np.concatenate([[0.0], np.cumsum(steps)]))


# gain structure -----------------------------------------------------------

def structure_mask(formulation: str, diagonal: bool) -> np.ndarray:
    """Permitted nonzeros of a 3x3 interconnection block."""
    m = np.zeros((3, 3), bool)
    if formulation == "I":
        m[1, 2] = True
        if diagonal:
            m[2, :] = True
    elif formulation == "II":
        m[2, :] = True
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    return m


def check_structure(K: np.ndarray, formulation: str,
                    tol: float = STRUCTURE_TOL) -> None:
    """Raise :class:`StructureError` naming the first masked-out nonzero."""
    N = K.shape[0]
    for i in range(N):
        for j in range(N):
            bad = np.abs(K[i, j]) * ~structure_mask(formulation, i == j) > tol
            if np.any(bad):
                r, c = np.argwhere(bad)[0]
                raise StructureError(
                    f"K[{i + 1},{j + 1}] entry ({r + 1},{c + 1}) = "
                    f"{K[i, j][r, c]:.3e} violates formulation {formulation}")


@dataclass
class GainSet:
    """Controller gains of a platoon under one error formulation.

    Attributes
    ----------
    K : ndarray, shape (N, N, 3, 3)
        Interconnection blocks ``K_ij``.
    Lbar : ndarray, shape (N, 3)
        Local gain rows.
    K0 : ndarray, shape (N, 3, 3)
        Leader blocks ``K_i0 = K_ii + sum_{j != i} K_ij``.
    kbar : ndarray, shape (N, N+1)
        Formulation I weights; column 0 is the leader.
    L : ndarray, shape (N, N, 3)
        Formulation I uses only ``L[i, i]`` (global row); formulation II
        uses every ``L[i, j]``.
    """

    formulation: str
    K: np.ndarray
    Lbar: np.ndarray
    K0: np.ndarray
    kbar: np.ndarray | None = None
    L: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def dense_K(self) -> np.ndarray:
        N = self.n
        return self.K.transpose(0, 2, 1, 3).reshape(3 * N, 3 * N)

    def edges(self, tol: float = 0.0) -> set[tuple[int, int]]:
        """``(i, j)``: follower i uses information from vehicle j (0 = leader)."""
        out = set()
        N = self.n
        for i in range(N):
            for j in range(N):
                if i != j and np.any(np.abs(self.K[i, j]) > tol):
                    out.add((i + 1, j + 1))
        if self.formulation == "I":
            for i in range(N):
                if abs(self.kbar[i, 0]) > tol:
                    out.add((i + 1, 0))
        else:
            for i in range(N):
                if np.any(np.abs(self.L[i, i]) > tol):
                    out.add((i + 1, 0))
        return out

    def closed_loop_matrix(self) -> np.ndarray:
        """Error-system matrix ``diag(A + B Lbar_i) + [K_ij]``."""
        N = self.n
        diag = np.zeros((3 * N, 3 * N))
        for i in range(N):
            diag[3 * i:3 * i + 3, 3 * i:3 * i + 3] = A_ERR + B_ERR @ self.Lbar[i:i + 1]
        return diag + self.dense_K()

    def rebuild_K(self) -> np.ndarray:
        """Reassemble ``K`` from the extracted controller parameters."""
        N = self.n
        K = np.zeros((N, N, 3, 3))
        for i in range(N):
            k0 = np.zeros((3, 3))
            for j in range(N):
                if i == j:
                    continue
                if self.formulation == "I":
                    K[i, j][1, 2] = -self.kbar[i, j + 1]
                else:
                    K[i, j][2, :] = -self.L[i, j]
            if self.formulation == "I":
                k0[1, 2] = self.kbar[i, 0] - 1.0
            k0[2, :] = self.L[i, i]
            K[i, i] = k0 - sum(K[i, j] for j in range(N) if j != i)
        return K

    def subset(self, keep: Sequence[int]) -> "GainSet":
        """Gains restricted to followers ``keep`` (0-based); dropped blocks
        fold into the leader blocks so ``K_ii`` stay unchanged."""
        keep = list(keep)
        K = self.K[np.ix_(keep, keep)].copy()
        K0 = np.stack([K[a, a] + sum(K[a, b] for b in range(len(keep)) if b != a)
                       for a in range(len(keep))]) if keep else np.zeros((0, 3, 3))
        return extract_gains(K, self.formulation, self.Lbar[keep], K0=K0)

    def to_dict(self) -> dict:
        return {"formulation": self.formulation,
                "K": self.K.tolist(), "Lbar": self.Lbar.tolist(),
                "K0": self.K0.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping, validate: bool = True) -> "GainSet":
        return extract_gains(np.array(d["K"], dtype=float), d["formulation"],
                             np.array(d["Lbar"], dtype=float),
                             K0=np.array(d["K0"], dtype=float)
                             if "K0" in d else None, validate=validate)


def extract_gains(K: np.ndarray, formulation: str, Lbar: np.ndarray,
                  K0: np.ndarray | None = None,
                  tol: float = STRUCTURE_TOL, validate: bool = True) -> GainSet:
    """Recover controller parameters from interconnection blocks.

    Parameters
    ----------
    K : ndarray, shape (N, N, 3, 3) or (3N, 3N)
    formulation : {"I", "II"}
    Lbar : ndarray, shape (N, 3)
    K0 : ndarray, optional
        Leader blocks. Defaults to ``K_ii + sum_{j != i} K_ij``; a stored
        ledger passes its own after leader-column updates.
    validate : bool
        Raise :class:`StructureError` on entries outside the mask.
    """
    if formulation not in FORMULATIONS:
        raise ValueError(f"unknown formulation {formulation!r}")
    K = np.asarray(K, dtype=float)
    if K.ndim == 2:
        N = K.shape[0] // 3
        K = K.reshape(N, 3, N, 3).transpose(0, 2, 1, 3)
    K = K.copy()
    N = K.shape[0]
    Lbar = np.asarray(Lbar, dtype=float).reshape(N, 3)
    if validate:
        check_structure(K, formulation, tol)
    if K0 is None:
        K0 = np.stack([K[i].sum(axis=0) for i in range(N)]) if N else \
            np.zeros((0, 3, 3))
    else:
        K0 = np.asarray(K0, dtype=float).reshape(N, 3, 3).copy()
    L = np.zeros((N, N, 3))
    kbar = None
    if formulation == "I":
        kbar = np.zeros((N, N + 1))
        for i in range(N):
            for j in range(N):
                if j != i:
                    kbar[i, j + 1] = -K[i, j][1, 2]
            kbar[i, 0] = K0[i][1, 2] + 1.0
            L[i, i] = K0[i][2, :]
    else:
        for i in range(N):
            for j in range(N):
                if j != i:
                    L[i, j] = -K[i, j][2, :]
            L[i, i] = K0[i][2, :]
    return GainSet(formulation, K, Lbar, K0, kbar, L)


# error states ---------------------------------------------------------------

def error_state_I(i: int, x, v, a, gains: GainSet,
                  geo: PlatoonGeometry) -> ErrorState:
    """Weighted relative errors of follower ``i`` (1-based; index 0 = leader).

    Positions increase in the direction of travel, so vehicle ``i`` sits
    ``d_ij`` behind vehicle ``j`` when ``x_i - x_j + d_ij = 0``.
    """
    kb = gains.kbar[i - 1]
    xt = sum(kb[j] * (x[i] - x[j] + geo.d_ij(i, j))
             for j in range(len(x)) if j != i)
    vt = sum(kb[j] * (v[i] - v[j]) for j in range(len(v)) if j != i)
    return ErrorState(float(xt), float(vt), float(a[i] - a[0]))


def error_state_II(i: int, state: VehicleState, leader: VehicleState,
                   geo: PlatoonGeometry) -> ErrorState:
    """Errors of follower ``i`` relative to its slot behind the leader."""
    return ErrorState(state.x - (leader.x - geo.d_ij(i, 0)),
                      state.v - leader.v, state.a - leader.a)


def errors_all(x, v, a, gains: GainSet, geo: PlatoonGeometry) -> np.ndarray:
    """All follower errors, shape (N, 3); arrays include the leader at 0."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    E = np.empty((x.size - 1, 3))
    if gains.formulation == "I":
        kb = gains.kbar
        s = kb.sum(axis=1)
        xd = x + geo.d
        E[:, 0] = s * xd[1:] - kb @ xd
        E[:, 1] = s * v[1:] - kb @ v
    else:
        E[:, 0] = x[1:] - x[0] + geo.d[1:]
        E[:, 1] = v[1:] - v[0]
    E[:, 2] = a[1:] - a[0]
    return E


def control(i: int, gains: GainSet,
            errors: Mapping[int, ErrorState | np.ndarray]) -> float:
    """Virtual input ``g_i`` of follower ``i`` (1-based).

    ``errors`` maps follower indices to their error states; a neighbour
    with a nonzero gain block must be present.
    """
    def get(j):
        if j not in errors:
            raise TopologyError(f"vehicle {i} needs the error state of {j}")
        e = errors[j]
        return e.as_array() if isinstance(e, ErrorState) else np.asarray(e, float)

    ei = get(i)
    g = float(gains.Lbar[i - 1] @ ei)
    if gains.formulation == "I":
        return g + float(gains.L[i - 1, i - 1] @ ei)
    for j in range(1, gains.n + 1):
        row = gains.K[i - 1, j - 1][2, :]
        if np.any(row != 0.0):
            g += float(row @ get(j))
    return g


def control_all(gains: GainSet, E: np.ndarray) -> np.ndarray:
    """Vectorized :func:`control` for an (N, 3) error array."""
    g = np.einsum("ij,ij->i", gains.Lbar, E)
    if gains.formulation == "I":
        return g + np.einsum("iij,ij->i", gains.L, E)
    return g + np.einsum("ijk,jk->i", gains.K[:, :, 2, :], E)
