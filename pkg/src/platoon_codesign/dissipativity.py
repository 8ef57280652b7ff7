"""Dissipativity certificates for LTI systems and their interconnections.

Supply rates are quadratic forms ``s(u, y) = [u; y]^T X [u; y]`` with the
blocks ``X11`` acting on the input and ``X22`` on the output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import lmi
from .lmi import LmiProblem, SolveReport

__all__ = [
    "SupplyRate",
    "EidCertificate",
    "SubsystemCertificate",
    "InterconnectionSpec",
    "AssumptionError",
    "InfeasibleError",
    "NotHurwitzError",
    "xeid_check",
    "estimate_l2_gain",
    "hinf_norm_sweep",
    "local_controller_synthesize",
    "network_analyze",
    "network_synthesize",
    "is_hurwitz",
    "ALPHA_GRID",
]

# alpha values scanned by the negative-X11 synthesis when none is given.
ALPHA_GRID = tuple(10.0 ** np.linspace(-2, 2, 9))


class AssumptionError(ValueError):
    """A structural precondition on the supply rates does not hold."""


class InfeasibleError(RuntimeError):
    """An LMI synthesis problem has no solution."""

    def __init__(self, message: str, report: SolveReport | None = None):
        super().__init__(message)
        self.report = report


class NotHurwitzError(ValueError):
    """The state matrix has an eigenvalue with nonnegative real part."""


def is_hurwitz(a: np.ndarray, tol: float = 1e-9) -> bool:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return bool(np.all(np.linalg.eigvals(a).real < -tol))


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class SupplyRate:
    """Quadratic supply rate with coefficient blocks ``X11 .. X22``."""

    X11: np.ndarray
    X12: np.ndarray
    X22: np.ndarray

    def __post_init__(self):
        for name in ("X11", "X12", "X22"):
            object.__setattr__(self, name, np.atleast_2d(
                np.asarray(getattr(self, name), dtype=float)))
        if self.X11.shape[0] != self.X11.shape[1] or \
                self.X22.shape[0] != self.X22.shape[1]:
            raise ValueError("X11 and X22 must be square")
        if self.X12.shape != (self.X11.shape[0], self.X22.shape[0]):
            raise ValueError("X12 shape inconsistent with X11/X22")
        if not (np.allclose(self.X11, self.X11.T) and
                np.allclose(self.X22, self.X22.T)):
            raise ValueError("X11 and X22 must be symmetric")

    @property
    def X21(self) -> np.ndarray:
        return self.X12.T

    @property
    def n_in(self) -> int:
        return self.X11.shape[0]

    @property
    def n_out(self) -> int:
        return self.X22.shape[0]

    def matrix(self) -> np.ndarray:
        return np.block([[self.X11, self.X12], [self.X21, self.X22]])

    def value(self, u: np.ndarray, y: np.ndarray) -> float:
        v = np.concatenate([np.ravel(u), np.ravel(y)])
        return float(v @ self.matrix() @ v)

    @classmethod
    def passive(cls, n: int = 1) -> "SupplyRate":
        return cls(np.zeros((n, n)), 0.5 * np.eye(n), np.zeros((n, n)))

    @classmethod
    def if_ofp(cls, nu: float, rho: float, n: int = 1) -> "SupplyRate":
        """Input-feedforward output-feedback passivity with indices (nu, rho)."""
        return cls(-nu * np.eye(n), 0.5 * np.eye(n), -rho * np.eye(n))

    @classmethod
    def l2gain(cls, gamma: float, n_in: int = 1,
               n_out: int | None = None) -> "SupplyRate":
        n_out = n_in if n_out is None else n_out
        return cls(gamma ** 2 * np.eye(n_in), np.zeros((n_in, n_out)),
                   -np.eye(n_out))


@dataclass
class EidCertificate:
    """Storage matrix ``P`` certifying dissipativity under ``rate``."""

    P: np.ndarray
    rate: SupplyRate
    min_eig: float


@dataclass
class SubsystemCertificate:
    """Locally synthesized controller and passivity indices of one vehicle.

    ``P`` is the synthesis variable; the closed loop from the external
    input to the state is dissipative with storage ``e^T P^{-1} e``.
    """

    nu: float
    rho: float
    gamma_tilde: float
    p: float
    P: np.ndarray
    Lbar: np.ndarray
    L_tilde: np.ndarray | None = None
    solve_time: float = 0.0

    @property
    def rho_tilde(self) -> float:
        return 1.0 / self.rho

    @property
    def storage(self) -> np.ndarray:
        return np.linalg.inv(self.P)

    def rate(self) -> SupplyRate:
        return SupplyRate.if_ofp(self.nu, self.rho, self.P.shape[0])

    def to_dict(self) -> dict:
        return {"nu": self.nu, "rho": self.rho, "gamma_tilde": self.gamma_tilde,
                "p": self.p, "P": self.P.tolist(),
                "Lbar": self.Lbar.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SubsystemCertificate":
        return cls(float(d["nu"]), float(d["rho"]), float(d["gamma_tilde"]),
                   float(d["p"]), np.array(d["P"], dtype=float),
                   np.atleast_2d(np.array(d["Lbar"], dtype=float)))


@dataclass
class InterconnectionSpec:
    """Static interconnection ``[u; z] = [[Muy, Muw], [Mzy, Mzw]] [y; w]``.

    ``in_dims``/``out_dims`` list each subsystem's input and output size.
    ``p`` optionally carries the subsystem weights found by synthesis.
    """

    M_uy: np.ndarray
    M_uw: np.ndarray
    M_zy: np.ndarray
    M_zw: np.ndarray
    in_dims: Sequence[int] = ()
    out_dims: Sequence[int] = ()
    p: np.ndarray | None = None
    alpha: float | None = None

    def __post_init__(self):
        for name in ("M_uy", "M_uw", "M_zy", "M_zw"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name),
                                                         dtype=float)))
        nu_, ny = self.M_uy.shape
        nz, nw = self.M_zw.shape
        if self.M_uw.shape != (nu_, nw) or self.M_zy.shape != (nz, ny):
            raise ValueError("interconnection blocks have inconsistent shapes")
        if not self.in_dims:
            self.in_dims = (nu_,)
        if not self.out_dims:
            self.out_dims = (ny,)
        if sum(self.in_dims) != nu_ or sum(self.out_dims) != ny:
            raise ValueError("port dimensions do not match M_uy")

    @property
    def n_w(self) -> int:
        return self.M_uw.shape[1]

    @property
    def n_z(self) -> int:
        return self.M_zy.shape[0]


# single-system certification ---------------------------------------------

def _xeid_lmi(prob: LmiProblem, P, A, B, C, D, X: SupplyRate):
    top_left = -(P @ A + A.T @ P) + C.T @ X.X22 @ C
    top_right = -(P @ B) + C.T @ X.X21 + C.T @ X.X22 @ D
    bottom = X.X11 + X.X12 @ D + D.T @ X.X21 + D.T @ X.X22 @ D
    return lmi.bmat([[top_left, top_right], [top_right.T, bottom]])


def _as_system(A, B, C, D):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    D = np.asarray(D, dtype=float).reshape(C.shape[0], B.shape[1])
    return A, B, C, D


def xeid_check(A, B, C, D, X: SupplyRate, backend: str = "clarabel",
               margin: float = lmi.DEFAULT_MARGIN) -> EidCertificate | None:
    """Search for a storage matrix certifying X-EID of ``(A, B, C, D)``.

    Returns the certificate, or ``None`` when the LMI is infeasible.
    """
    A, B, C, D = _as_system(A, B, C, D)
    if X.n_in != B.shape[1] or X.n_out != C.shape[0]:
        raise ValueError("supply rate dimensions do not match the system")
    prob = LmiProblem("xeid", margin=margin)
    P = prob.symmetric("P", A.shape[0])
    prob.add_psd(P, strict=True, name="P>0")
    F = _xeid_lmi(prob, P, A, B, C, D, X)
    prob.add_psd(F, strict=False, name="dissipation")
    rep = prob.solve(backend=backend)
    if not rep.ok:
        return None
    return EidCertificate(rep["P"], X, min(rep.min_eigs))


def hinf_norm_sweep(A, B, C, D, n_grid: int = 2000) -> float:
    """Peak singular value of the frequency response (grid plus refinement)."""
    from scipy.optimize import minimize_scalar

    A, B, C, D = _as_system(A, B, C, D)
    n = A.shape[0]

    def sigma(w: float) -> float:
        g = C @ np.linalg.solve(1j * w * np.eye(n) - A, B) + D
        return float(np.linalg.svd(g, compute_uv=False)[0])

    eig = np.abs(np.linalg.eigvals(A)) if n else np.array([1.0])
    lo = max(1e-4, 1e-3 * eig.min(initial=1.0))
    hi = 1e3 * max(1.0, eig.max(initial=1.0))
    grid = np.concatenate([[0.0], np.geomspace(lo, hi, n_grid)])
    vals = np.array([sigma(w) for w in grid])
    k = int(np.argmax(vals))
    best = vals[k]
    if 0 < k < grid.size - 1:
        res = minimize_scalar(lambda w: -sigma(w), bounds=(grid[k - 1], grid[k + 1]),
                              method="bounded", options={"xatol": 1e-10})
        best = max(best, -res.fun)
    # static gain at infinite frequency
    return max(best, float(np.linalg.svd(D, compute_uv=False)[0]) if D.size else 0.0)


def estimate_l2_gain(A, B, C, D, tol: float = 1e-4,
                     backend: str = "clarabel") -> float:
    """L2 gain by bisection over ``xeid_check`` with ``l2gain(gamma)``."""
    A, B, C, D = _as_system(A, B, C, D)
    if A.size and not is_hurwitz(A, tol=0.0):
        raise NotHurwitzError("state matrix is not Hurwitz; gain is not finite")

    def feasible(g: float) -> bool:
        return xeid_check(A, B, C, D, SupplyRate.l2gain(g, B.shape[1], C.shape[0]),
                          backend=backend, margin=0.0) is not None

    lo, hi = 0.0, 1.0
    while not feasible(hi):
        lo, hi = hi, 2.0 * hi
        if hi > 1e8:
            raise RuntimeError("L2 gain bracket exceeded 1e8")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# local synthesis -----------------------------------------------------------

def local_controller_synthesize(A, B, p: float, *, gain_reg: float = 1e-3,
                                storage_floor: float = 1e-2,
                                gamma_weight: float = 1.0,
                                backend: str = "clarabel",
                                margin: float = lmi.DEFAULT_MARGIN
                                ) -> SubsystemCertificate:
    """Co-design a local state feedback and the passivity indices of one node.

    Solves, in ``(L~, P, nu, rho~, gamma~)``::

        [[rho~ I, P, 0], [P, -He(AP + BL~), -I + P/2], [0, -I + P/2, -nu I]] > 0
        -gamma~/p < nu < 0,   0 < rho~ < min(p, 4 gamma~/p),   P >= floor*I

    minimizing ``gamma~ + gain_reg * ||L~||_1``. The local gain is
    ``Lbar = L~ P^{-1}`` and ``rho = 1/rho~``.

    Raises
    ------
    ValueError
        If ``p <= 0``.
    InfeasibleError
        If the LMI has no solution.
    """
    if not p > 0:
        raise ValueError("p must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, m = B.shape
    I = np.eye(n)
    prob = LmiProblem("local", margin=margin)
    P = prob.symmetric("P", n)
    Lt = prob.variable("L_tilde", (m, n))
    nu = prob.scalar("nu")
    rt = prob.scalar("rho_tilde")
    gt = prob.scalar("gamma_tilde")
    AP = A @ P + B @ Lt
    off = 0.5 * P - I
    F = lmi.bmat([[rt * I, P, None],
                  [P, -(AP + AP.T), off],
                  [np.zeros((n, n)), off.T, -nu * I]])
    prob.add_psd(F, name="local_dissipation")
    prob.add_psd(P - storage_floor * I, strict=False, name="storage_floor")
    prob.add_nonneg(-nu, strict=True, name="nu<0")
    prob.add_nonneg(nu + gt / p, strict=True, name="nu>-gt/p")
    prob.add_nonneg(rt, strict=True, name="rt>0")
    prob.add_nonneg(p - rt, strict=True, name="rt<p")
    prob.add_nonneg(4.0 * gt / p - rt, strict=True, name="rt<4gt/p")
    prob.minimize(gamma_weight * gt)
    if gain_reg > 0:
        prob.add_abs_penalty(Lt, gain_reg)
    rep = prob.solve(backend=backend)
    if not rep.ok:
        raise InfeasibleError(f"local synthesis infeasible ({rep.status})", rep)
    Pv = _sym(rep["P"])
    Ltv = rep["L_tilde"]
    Lbar = Ltv @ np.linalg.inv(Pv)
    return SubsystemCertificate(
        nu=float(rep["nu"][0, 0]), rho=1.0 / float(rep["rho_tilde"][0, 0]),
        gamma_tilde=float(rep["gamma_tilde"][0, 0]), p=float(p), P=Pv,
        Lbar=Lbar, L_tilde=Ltv, solve_time=rep.wall_time)


# network analysis / synthesis ----------------------------------------------

def _check_ports(rates: Sequence[SupplyRate], in_dims, out_dims) -> None:
    if [r.n_in for r in rates] != list(in_dims) or \
            [r.n_out for r in rates] != list(out_dims):
        raise ValueError("supply rate port sizes do not match the interconnection")


def _weighted_blocks(rates: Sequence[SupplyRate], p):
    """``diag(p_i X_i^kl)`` as affine expressions of the weights ``p``."""
    def diag_of(attr):
        return lmi.block_diag([p[i] * getattr(r, attr)
                               for i, r in enumerate(rates)])
    return diag_of("X11"), diag_of("X12"), diag_of("X22")


@dataclass
class NetworkCertificate:
    p: np.ndarray
    min_eig: float
    report: SolveReport = field(repr=False, default=None)


def network_analyze(rates: Sequence[SupplyRate], M: InterconnectionSpec,
                    Y: SupplyRate, *, min_weight_sum: float = 1.0,
                    p_fixed: Sequence[float] | None = None,
                    backend: str = "clarabel",
                    margin: float = lmi.DEFAULT_MARGIN
                    ) -> NetworkCertificate | None:
    """Certify Y-dissipativity of an interconnection of dissipative nodes.

    Searches ``p_i >= 0`` with ``sum p_i >= min_weight_sum`` such that::

        [Muy Muw; I 0; 0 I; Mzy Mzw]^T diag(X_p, -Y) [...] <= 0

    Returns ``None`` when infeasible.
    """
    _check_ports(rates, M.in_dims, M.out_dims)
    if Y.n_in != M.n_w or Y.n_out != M.n_z:
        raise ValueError("Y dimensions do not match the exogenous ports")
    N = len(rates)
    prob = LmiProblem("network_analysis", margin=margin)
    if p_fixed is None:
        pv = prob.variable("p", (N, 1), lb=0.0)
        p = [pv[i, 0] for i in range(N)]
        prob.add_nonneg(pv.sum() - min_weight_sum, name="normalization")
    else:
        pf = np.asarray(p_fixed, dtype=float).reshape(-1)
        if pf.size != N:
            raise ValueError("p_fixed length differs from subsystem count")
        if np.any(pf < 0) or pf.sum() < min_weight_sum:
            return None
        p = [lmi.as_affine(x) for x in pf]
        pv = None
    X11, X12, X22 = _weighted_blocks(rates, p)
    ny, nw = M.M_uy.shape[1], M.n_w
    Xp = lmi.bmat([[X11, X12], [X12.T, X22]])
    Yneg = -Y.matrix()
    big = lmi.block_diag([Xp, Yneg])
    T = np.block([[M.M_uy, M.M_uw],
                  [np.eye(ny), np.zeros((ny, nw))],
                  [np.zeros((nw, ny)), np.eye(nw)],
                  [M.M_zy, M.M_zw]])
    F = -(T.T @ big @ T)
    prob.add_psd(F, strict=False, name="network_dissipation")
    if pv is None:
        # nothing to optimize; evaluate directly
        val = F.value(np.zeros(0))
        lam = float(np.linalg.eigvalsh(_sym(val))[0])
        if lam < -1e-9:
            return None
        return NetworkCertificate(np.asarray(p_fixed, dtype=float), lam)
    rep = prob.solve(backend=backend)
    if not rep.ok:
        return None
    return NetworkCertificate(rep["p"].reshape(-1), min(rep.min_eigs), rep)


def _assumption_gate(rates: Sequence[SupplyRate], Y: SupplyRate) -> int:
    """Return +1 / -1 for the sign of all ``X_i^11``; raise otherwise."""
    if np.linalg.eigvalsh(_sym(Y.X22)).max() >= 0:
        raise AssumptionError("Y22 must be negative definite")
    signs = set()
    for r in rates:
        ev = np.linalg.eigvalsh(_sym(r.X11))
        if ev.min() > 0:
            signs.add(1)
        elif ev.max() < 0:
            signs.add(-1)
        else:
            signs.add(0)
    if signs == {1}:
        return 1
    if signs == {-1}:
        return -1
    raise AssumptionError("all X_i^11 must be positive definite or all "
                          "negative definite")


def network_synthesize(rates: Sequence[SupplyRate], Y: SupplyRate,
                       in_dims: Sequence[int] | None = None,
                       out_dims: Sequence[int] | None = None, *,
                       n_w: int | None = None, n_z: int | None = None,
                       mask: dict | None = None,
                       fixed: InterconnectionSpec | None = None,
                       costs: np.ndarray | None = None,
                       alpha: float | None = None,
                       min_weight_sum: float = 1.0,
                       backend: str = "clarabel",
                       margin: float = lmi.DEFAULT_MARGIN
                       ) -> InterconnectionSpec:
    """Synthesize an interconnection matrix rendering the network Y-dissipative.

    ``mask`` maps block names (``"M_uy"``, ``"M_uw"``, ``"M_zy"``,
    ``"M_zw"``) to boolean arrays of free entries; entries outside the
    mask take their value from ``fixed`` (zero by default). ``costs``
    weights ``|L_uy|`` entrywise, where ``L = X_p^11 M``.

    With every ``X_i^11 > 0`` the problem is convex after the change of
    variables. With every ``X_i^11 < 0`` a sufficient condition
    parameterized by ``alpha`` is used; it needs equal input, output and
    exogenous dimensions, and ``alpha`` is scanned over
    :data:`ALPHA_GRID` when not supplied.
    """
    sign = _assumption_gate(rates, Y)
    in_dims = [r.n_in for r in rates] if in_dims is None else list(in_dims)
    out_dims = [r.n_out for r in rates] if out_dims is None else list(out_dims)
    _check_ports(rates, in_dims, out_dims)
    nu_, ny = sum(in_dims), sum(out_dims)
    n_w = Y.n_in if n_w is None else n_w
    n_z = Y.n_out if n_z is None else n_z
    if (Y.n_in, Y.n_out) != (n_w, n_z):
        raise ValueError("Y dimensions do not match the exogenous ports")
    shapes = {"M_uy": (nu_, ny), "M_uw": (nu_, n_w),
              "M_zy": (n_z, ny), "M_zw": (n_z, n_w)}
    mask = {} if mask is None else dict(mask)
    masks = {k: np.ones(s, bool) if k not in mask else
             np.asarray(mask[k], bool) for k, s in shapes.items()}
    for k, s in shapes.items():
        if masks[k].shape != s:
            raise ValueError(f"mask for {k} must have shape {s}")
    if fixed is None:
        fixed_vals = {k: np.zeros(s) for k, s in shapes.items()}
    else:
        fixed_vals = {k: getattr(fixed, k) for k in shapes}
    partial_u = not (masks["M_uy"].all() and masks["M_uw"].all())
    if partial_u and any(np.count_nonzero(r.X11 - np.diag(np.diag(r.X11)))
                         for r in rates):
        raise AssumptionError("masked synthesis requires diagonal X_i^11")
    if sign < 0 and not (nu_ == ny == n_w):
        raise AssumptionError("the negative X^11 branch needs equal input, "
                              "output and exogenous dimensions")

    def build(alpha_val):
        prob = LmiProblem("network_synthesis", margin=margin)
        N = len(rates)
        pv = prob.variable("p", (N, 1), lb=0.0)
        p = [pv[i, 0] for i in range(N)]
        prob.add_nonneg(pv - margin, name="p>0")
        prob.add_nonneg(pv.sum() - min_weight_sum, name="normalization")
        Xp11, _, Xp22 = _weighted_blocks(rates, p)
        X12n = sla.block_diag(*[np.linalg.solve(r.X11, r.X12) for r in rates])
        # entry (k, k) of Xp11 as an affine scalar, for fixed-entry terms
        diag_p = np.concatenate([[i] * d for i, d in enumerate(in_dims)])
        x11_diag = np.concatenate([np.diag(r.X11) for r in rates])

        def l_block(name):
            var = prob.variable("L_" + name[2:], shapes[name], mask=masks[name])
            fv = np.where(masks[name], 0.0, fixed_vals[name])
            if not np.any(fv):
                return var
            rows = []
            for k in range(shapes[name][0]):
                coef = x11_diag[k] * p[diag_p[k]]
                rows.append(coef * fv[k:k + 1, :])
            return var + lmi.vstack(rows)

        def m_block(name):
            var = prob.variable(name, shapes[name], mask=masks[name])
            fv = np.where(masks[name], 0.0, fixed_vals[name])
            return var + fv

        L_uy, L_uw = l_block("M_uy"), l_block("M_uw")
        M_zy, M_zw = m_block("M_zy"), m_block("M_zw")
        L = lmi.hstack([L_uy, L_uw])
        Mz = lmi.hstack([M_zy, M_zw])
        J = np.hstack([np.eye(ny), np.zeros((ny, n_w))])
        Jw = np.hstack([np.zeros((n_w, ny)), np.eye(n_w)])
        LX = L.T @ X12n @ J
        YM = Jw.T @ Y.X12 @ Mz
        omega = (-(LX + LX.T) - J.T @ Xp22 @ J + Jw.T @ Y.X11 @ Jw
                 + YM + YM.T)
        Y22 = Y.X22
        if sign > 0:
            F = lmi.bmat([[Xp11, np.zeros((nu_, n_z)), L],
                          [np.zeros((n_z, nu_)), -Y22, -(Y22 @ Mz)],
                          [L.T, -(Mz.T @ Y22), omega]])
        else:
            E = np.hstack([np.eye(nu_), np.eye(nu_)])
            EL = E.T @ L
            omega = omega - alpha_val * (EL + EL.T) + \
                alpha_val ** 2 * (E.T @ Xp11 @ E)
            F = lmi.bmat([[-Y22, -(Y22 @ Mz)], [-(Mz.T @ Y22), omega]])
        prob.add_psd(F, name="network_synthesis")
        if costs is not None:
            prob.add_abs_penalty(L_uy, np.asarray(costs, dtype=float))
        return prob, L_uy, L_uw, M_zy, M_zw

    def recover(rep, L_uy, L_uw, M_zy, M_zw, alpha_val):
        x = rep.x
        pv = rep["p"].reshape(-1)
        xp11 = sla.block_diag(*[pv[i] * r.X11 for i, r in enumerate(rates)])
        inv = np.linalg.inv(xp11)
        M = InterconnectionSpec(inv @ L_uy.value(x), inv @ L_uw.value(x),
                                M_zy.value(x), M_zw.value(x),
                                in_dims, out_dims, p=pv, alpha=alpha_val)
        # masked-out entries are exact by construction
        for k in shapes:
            vals = getattr(M, k)
            vals[~masks[k]] = fixed_vals[k][~masks[k]]
        return M

    if sign > 0:
        prob, *blocks = build(None)
        rep = prob.solve(backend=backend)
        if not rep.ok:
            raise InfeasibleError(f"network synthesis infeasible ({rep.status})",
                                  rep)
        return recover(rep, *blocks, None)

    grid = ALPHA_GRID if alpha is None else (float(alpha),)
    best = None
    for a in grid:
        prob, *blocks = build(a)
        rep = prob.solve(backend=backend)
        if rep.ok and (best is None or rep.objective < best[0].objective - 1e-12):
            best = (rep, blocks, a)
    if best is None:
        raise InfeasibleError("network synthesis infeasible for every alpha")
    rep, blocks, a = best
    return recover(rep, *blocks, a)
