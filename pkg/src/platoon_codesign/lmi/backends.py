"""Conic solver backends (Clarabel and CVXOPT)."""

from __future__ import annotations

import time
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .problem import FEASIBILITY_TOL, ConicProgram, LmiProblem, SolveReport, evaluate

__all__ = ["solve", "BACKENDS", "DEFAULT_TOL"]

DEFAULT_TOL = 1e-9


def _clarabel(prog: ConicProgram, tol: float, max_iter: int,
              verbose: bool, chordal: bool = True) -> dict:
    import clarabel

    n = prog.n
    P = sp.csc_matrix((n, n))
    cones = []
    if prog.n_eq:
        cones.append(clarabel.ZeroConeT(prog.n_eq))
    if prog.n_lin:
        cones.append(clarabel.NonnegativeConeT(prog.n_lin))
    cones.extend(clarabel.PSDTriangleConeT(d) for d in prog.psd_dims)
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.max_iter = max_iter
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.tol_infeas_abs = tol
    settings.tol_infeas_rel = tol
    settings.tol_ktratio = 1e-7
    # chordal decomposition speeds up large sparse LMIs but can stall in
    # setup on some dense-ish patterns
    settings.chordal_decomposition_enable = chordal
    solver = clarabel.DefaultSolver(P, prog.c, prog.G.tocsc(), prog.h,
                                    cones, settings)
    sol = solver.solve()
    name = str(sol.status)
    if name.startswith("SolverStatus."):
        name = name.split(".", 1)[1]
    if name in ("Solved",):
        status = "optimal"
    elif name in ("AlmostSolved",):
        status = "feasible"
    elif name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = "infeasible"
    elif name in ("DualInfeasible", "AlmostDualInfeasible"):
        status = "ill_posed"
    else:
        status = "unknown"
    return dict(status=status, solver_status=name, x=np.array(sol.x),
                z=np.array(sol.z), r_prim=float(sol.r_prim),
                r_dual=float(sol.r_dual), iterations=int(sol.iterations))


def _cvxopt(prog: ConicProgram, tol: float, max_iter: int,
            verbose: bool, chordal: bool = True) -> dict:
    import cvxopt
    from cvxopt import solvers

    n = prog.n
    G = prog.G.tocsr()
    rows = []
    hs = []
    eq = slice(0, prog.n_eq)
    lin = slice(prog.n_eq, prog.n_eq + prog.n_lin)
    rows.append(G[lin])
    hs.append(prog.h[lin])
    start = prog.n_eq + prog.n_lin
    for d in prog.psd_dims:
        k = d * (d + 1) // 2
        blk = G[start:start + k]
        hb = prog.h[start:start + k]
        # expand scaled upper triangle to a full column-major matrix
        full_rows = np.zeros(d * d, dtype=int)
        scale = np.zeros(d * d)
        t = 0
        for j in range(d):
            for i in range(j + 1):
                s = 1.0 if i == j else 1.0 / np.sqrt(2.0)
                full_rows[j * d + i] = t
                full_rows[i * d + j] = t
                scale[j * d + i] = s
                scale[i * d + j] = s
                t += 1
        rows.append(sp.diags(scale) @ blk[full_rows])
        hs.append(scale * hb[full_rows])
        start += k

    def to_cvx(a):
        a = a.tocoo()
        return cvxopt.spmatrix(a.data.tolist(), a.row.tolist(), a.col.tolist(),
                               size=a.shape)

    Gc = to_cvx(sp.vstack(rows)) if rows else cvxopt.spmatrix([], [], [], (0, n))
    hc = cvxopt.matrix(np.concatenate(hs) if hs else np.zeros(0))
    dims = {"l": prog.n_lin, "q": [], "s": list(prog.psd_dims)}
    kwargs = {}
    if prog.n_eq:
        kwargs["A"] = to_cvx(G[eq])
        kwargs["b"] = cvxopt.matrix(prog.h[eq])
    opts = {"show_progress": verbose, "abstol": tol, "reltol": tol,
            "feastol": tol, "maxiters": max_iter}
    sol = solvers.conelp(cvxopt.matrix(prog.c), Gc, hc, dims,
                         options=opts, **kwargs)
    name = sol["status"]
    status = {"optimal": "optimal", "primal infeasible": "infeasible",
              "dual infeasible": "ill_posed"}.get(name, "unknown")
    x = np.array(sol["x"]).reshape(-1) if sol["x"] is not None else None
    z = np.array(sol["z"]).reshape(-1) if sol["z"] is not None else None
    return dict(status=status, solver_status=name, x=x, z=z,
                r_prim=float(sol.get("primal infeasibility") or 0.0),
                r_dual=float(sol.get("dual infeasibility") or 0.0),
                iterations=int(sol.get("iterations") or 0), cvx_z=True)


BACKENDS: dict[str, Callable] = {"clarabel": _clarabel, "cvxopt": _cvxopt}


def solve(problem: LmiProblem, backend: str = "clarabel",
          tol: float = DEFAULT_TOL, max_iter: int = 200,
          verbose: bool = False, chordal: bool = True) -> SolveReport:
    """Lower ``problem`` and solve it with the named backend.

    The returned status is verified: ``optimal``/``feasible`` is only
    reported when every constraint holds to ``-1e-7`` at the assignment.
    ``chordal`` toggles Clarabel's chordal decomposition (ignored by CVXOPT).
    """
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; "
                         f"choose from {sorted(BACKENDS)}")
    t0 = time.perf_counter()
    prog, _ = problem.lower()
    raw = BACKENDS[backend](prog, tol, max_iter, verbose, chordal)
    wall = time.perf_counter() - t0

    status = raw["status"]
    x = raw["x"]
    cert = None
    eigs: list[float] = []
    objective = np.nan
    assignment: dict[str, np.ndarray] = {}
    have_x = x is not None and x.size == prog.n and np.all(np.isfinite(x))
    if have_x and status in ("optimal", "feasible", "unknown"):
        eigs = evaluate(problem, x)
        ok = all(e >= -FEASIBILITY_TOL for e in eigs)
        if status == "unknown":
            status = "feasible" if ok else "ill_posed"
        elif not ok:
            status = "ill_posed"
    if status in ("optimal", "feasible"):
        assignment = problem.assignment_from_x(x)
        objective = problem.objective_value(x)
    elif status == "infeasible" and raw.get("z") is not None:
        z = raw["z"]
        if raw.get("cvx_z"):
            cert = np.nan
        else:
            denom = abs(float(prog.h @ z)) or 1.0
            cert = float(np.abs(prog.G.T @ z).max(initial=0.0) / denom)
    return SolveReport(status=status, objective=objective,
                       assignment=assignment, x=x if have_x else None,
                       primal_residual=raw["r_prim"],
                       dual_residual=raw["r_dual"],
                       certificate_residual=cert, wall_time=wall,
                       backend=backend, solver_status=raw["solver_status"],
                       iterations=raw["iterations"], min_eigs=eigs)
