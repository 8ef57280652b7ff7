"""LMI problem container, conic lowering, evaluation and debug dump."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import scipy.sparse as sp

from .expr import Affine, MatrixVar, as_affine

__all__ = [
    "DEFAULT_MARGIN",
    "Constraint",
    "LmiProblem",
    "ConicProgram",
    "SolveReport",
    "evaluate",
]

DEFAULT_MARGIN = 1e-6
SYMMETRY_TOL = 1e-9
FEASIBILITY_TOL = 1e-7


@dataclass
class Constraint:
    """``expr >= margin`` in the PSD (``kind='psd'``) or entrywise sense."""

    expr: Affine
    kind: str
    margin: float
    name: str

    @property
    def dim(self) -> int:
        return self.expr.shape[0] if self.kind == "psd" else self.expr.size


@dataclass
class ConicProgram:
    """``min c^T x  s.t.  h - G x in K``; ``K`` = zero x nonneg x PSD blocks.

    Rows are ordered: ``n_eq`` equality rows, ``n_lin`` nonnegative rows,
    then one block of ``d*(d+1)/2`` rows per PSD cone of side ``d`` in
    scaled upper-triangular, column-major order.
    """

    c: np.ndarray
    G: sp.csc_matrix
    h: np.ndarray
    n_eq: int
    n_lin: int
    psd_dims: list[int]
    # for each PSD cone: (row, col) of each svec entry
    obj_offset: float = 0.0

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.h.size


@dataclass
class SolveReport:
    status: str
    objective: float
    assignment: dict[str, np.ndarray]
    x: np.ndarray | None
    primal_residual: float
    dual_residual: float
    certificate_residual: float | None
    wall_time: float
    backend: str
    solver_status: str
    iterations: int = 0
    min_eigs: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.assignment[name]


def _svec_rows(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-major vec indices of upper triangle (column-major) and scale."""
    ii, jj, sc = [], [], []
    for j in range(d):
        for i in range(j + 1):
            ii.append(i)
            jj.append(j)
            sc.append(1.0 if i == j else np.sqrt(2.0))
    return np.array(ii), np.array(jj), np.array(sc)


class LmiProblem:
    """A linear objective subject to affine PSD and entrywise constraints.

    Parameters
    ----------
    margin : float
        Strictness margin: a strict constraint ``F > 0`` is imposed as
        ``F - margin*I >= 0``.
    """

    def __init__(self, name: str = "lmi", margin: float = DEFAULT_MARGIN):
        if margin < 0:
            raise ValueError("strictness margin must be nonnegative")
        self.name = name
        self.margin = float(margin)
        self.variables: dict[str, MatrixVar] = {}
        self.constraints: list[Constraint] = []
        self._nvar = 0
        self._objective: Affine = Affine.constant(0.0)
        self._abs_terms: list[tuple[Affine, np.ndarray]] = []

    # variables ------------------------------------------------------------
    @property
    def nvar(self) -> int:
        return self._nvar

    def variable(self, name: str, shape=(1, 1), symmetric: bool = False,
                 mask=None, lb=None, ub=None) -> MatrixVar:
        if name in self.variables:
            raise ValueError(f"duplicate variable name {name!r}")
        if isinstance(shape, int):
            shape = (shape, shape)
        v = MatrixVar(name, shape, self._nvar, symmetric, mask, lb, ub)
        self._nvar += v.n_free
        self.variables[name] = v
        return v

    def scalar(self, name: str, lb=None, ub=None) -> MatrixVar:
        return self.variable(name, (1, 1), lb=lb, ub=ub)

    def symmetric(self, name: str, n: int, mask=None) -> MatrixVar:
        return self.variable(name, (n, n), symmetric=True, mask=mask)

    # constraints ----------------------------------------------------------
    def add_psd(self, expr, strict: bool = True, name: str | None = None,
                margin: float | None = None) -> Constraint:
        """Require ``expr >= margin*I`` (strict) or ``expr >= 0``."""
        expr = as_affine(expr)
        if expr.shape[0] != expr.shape[1]:
            raise ValueError(f"PSD constraint must be square, got {expr.shape}")
        if expr.asymmetry() > SYMMETRY_TOL:
            raise ValueError(
                f"PSD constraint {name or len(self.constraints)} is not "
                f"symmetric (mismatch {expr.asymmetry():.2e})")
        if margin is None:
            margin = self.margin if strict else 0.0
        c = Constraint(expr.symmetric_part(), "psd", float(margin),
                       name or f"psd{len(self.constraints)}")
        self.constraints.append(c)
        return c

    def add_nonneg(self, expr, strict: bool = False, name: str | None = None,
                   margin: float | None = None) -> Constraint:
        """Entrywise ``expr >= margin`` (strict) or ``expr >= 0``."""
        expr = as_affine(expr)
        if margin is None:
            margin = self.margin if strict else 0.0
        c = Constraint(expr, "nonneg", float(margin),
                       name or f"lin{len(self.constraints)}")
        self.constraints.append(c)
        return c

    def add_equal(self, lhs, rhs=0.0, name: str | None = None) -> Constraint:
        expr = as_affine(lhs) - rhs
        c = Constraint(expr, "zero", 0.0, name or f"eq{len(self.constraints)}")
        self.constraints.append(c)
        return c

    def add_less(self, lhs, rhs, strict: bool = False,
                 name: str | None = None) -> Constraint:
        return self.add_nonneg(as_affine(rhs) - lhs, strict=strict, name=name)

    # objective ------------------------------------------------------------
    def minimize(self, expr) -> None:
        """Add a 1x1 affine term to the objective."""
        expr = as_affine(expr)
        if expr.shape != (1, 1):
            raise ValueError("objective terms must be scalar")
        self._objective = self._objective + expr

    def add_abs_penalty(self, expr, weight=1.0) -> None:
        """Add ``sum weight_ij * |expr_ij|`` to the objective."""
        expr = as_affine(expr)
        w = np.broadcast_to(np.asarray(weight, dtype=float), expr.shape)
        if np.any(w < 0):
            raise ValueError("absolute-value weights must be nonnegative")
        self._abs_terms.append((expr, w.reshape(-1).copy()))

    # lowering -------------------------------------------------------------
    def lower(self) -> tuple[ConicProgram, int]:
        """Return the conic program and the number of epigraph scalars."""
        n0 = self._nvar
        # epigraph scalars for nonzero absolute-value entries
        epi_rows: list[tuple[sp.csr_matrix, float, float]] = []
        for expr, w in self._abs_terms:
            a = _pad_to(expr.coeff, n0)
            for k in range(expr.size):
                if w[k] == 0.0:
                    continue
                row = a[k]
                if row.nnz == 0:
                    continue
                epi_rows.append((row, expr.const[k], w[k]))
        n_epi = len(epi_rows)
        n = n0 + n_epi

        c = np.zeros(n)
        obj = self._objective
        c[:obj.nvar] += np.asarray(obj.coeff.todense()).reshape(-1)
        obj_offset = float(obj.const[0])
        for k, (_, const, w) in enumerate(epi_rows):
            c[n0 + k] = w

        eq_G, eq_h = [], []
        lin_G, lin_h = [], []
        psd_G, psd_h, psd_dims = [], [], []

        def rows_of(expr: Affine):
            return _pad_to(expr.coeff, n), expr.const

        for con in self.constraints:
            a, b = rows_of(con.expr)
            if con.kind == "zero":
                # s = h - Gx = 0  with G = A, h = -c
                eq_G.append(a)
                eq_h.append(-b)
            elif con.kind == "nonneg":
                lin_G.append(-a)
                lin_h.append(b - con.margin)
            else:
                d = con.expr.shape[0]
                ii, jj, sc = _svec_rows(d)
                idx = ii * d + jj
                sa = sp.diags(sc) @ a[idx]
                const = b[idx] - con.margin * (ii == jj)
                psd_G.append(-sa)
                psd_h.append(sc * const)
                psd_dims.append(d)
        # bounds on variables
        for v in self.variables.values():
            for bound, sign in ((v.lb, 1.0), (v.ub, -1.0)):
                if bound is None:
                    continue
                for k, (i, j) in enumerate(v.free_entries()):
                    if not np.isfinite(bound[i, j]):
                        continue
                    row = sp.csr_matrix(([sign], ([0], [v.offset + k])),
                                        shape=(1, n))
                    lin_G.append(-row)
                    lin_h.append(np.array([-sign * bound[i, j]]))
        # epigraph rows: t - e >= 0, t + e >= 0
        for k, (row, const, _) in enumerate(epi_rows):
            row = _pad_to(row, n)
            t = sp.csr_matrix(([1.0], ([0], [n0 + k])), shape=(1, n))
            lin_G.append(-(t - row))
            lin_h.append(np.array([-const]))
            lin_G.append(-(t + row))
            lin_h.append(np.array([const]))

        blocks = eq_G + lin_G + psd_G
        G = sp.vstack(blocks, format="csc") if blocks else sp.csc_matrix((0, n))
        h = np.concatenate(eq_h + lin_h + psd_h) if blocks else np.zeros(0)
        n_eq = int(sum(g.shape[0] for g in eq_G))
        n_lin = int(sum(g.shape[0] for g in lin_G))
        return ConicProgram(c, G, h, n_eq, n_lin, psd_dims, obj_offset), n_epi

    # convenience ----------------------------------------------------------
    def x_from_assignment(self, assignment: Mapping[str, Any]) -> np.ndarray:
        x = np.zeros(self._nvar)
        for name, v in self.variables.items():
            if name not in assignment:
                raise ValueError(f"assignment misses variable {name!r}")
            x[v.offset:v.offset + v.n_free] = v.pack(assignment[name])
        return x

    def assignment_from_x(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {name: v.value(x) for name, v in self.variables.items()}

    def objective_value(self, x: np.ndarray) -> float:
        val = float(self._objective.value(x)[0, 0])
        for expr, w in self._abs_terms:
            val += float(np.sum(w * np.abs(expr.value(x).reshape(-1))))
        return val

    def solve(self, backend: str = "clarabel", **options) -> SolveReport:
        from .backends import solve
        return solve(self, backend=backend, **options)

    def dump(self, stream: io.TextIOBase | None = None) -> str:
        """Plain-text description of the lowered conic program.

        Format::

            # <name>
            n <vars> m <rows>
            cones zero <k> nonneg <k> psd <d1> <d2> ...
            c
            <index> <value>            (nonzero entries)
            G
            <row> <col> <value>        (triplets, 0-based)
            h
            <row> <value>              (nonzero entries)
        """
        prog, _ = self.lower()
        out = io.StringIO()
        out.write(f"# {self.name}\n")
        out.write(f"n {prog.n} m {prog.m}\n")
        out.write(f"cones zero {prog.n_eq} nonneg {prog.n_lin} psd "
                  + " ".join(str(d) for d in prog.psd_dims) + "\n")
        out.write("c\n")
        for i in np.nonzero(prog.c)[0]:
            out.write(f"{i} {prog.c[i]:.17g}\n")
        out.write("G\n")
        g = prog.G.tocoo()
        for r, cidx, v in zip(g.row, g.col, g.data):
            out.write(f"{r} {cidx} {v:.17g}\n")
        out.write("h\n")
        for i in np.nonzero(prog.h)[0]:
            out.write(f"{i} {prog.h[i]:.17g}\n")
        text = out.getvalue()
        if stream is not None:
            stream.write(text)
        return text


def _pad_to(a: sp.csr_matrix, n: int) -> sp.csr_matrix:
    a = sp.csr_matrix(a)
    if a.shape[1] == n:
        return a
    return sp.csr_matrix((a.data, a.indices, a.indptr), shape=(a.shape[0], n))


def evaluate(problem: LmiProblem, assignment) -> list[float]:
    """Minimum eigenvalue of ``F - margin*I`` for each constraint.

    Entrywise constraints report their smallest entry minus the margin;
    equality constraints report ``-max|residual|``. ``assignment`` is a
    mapping from variable name to value or a flat decision vector.
    """
    if isinstance(assignment, Mapping):
        x = problem.x_from_assignment(assignment)
    else:
        x = np.asarray(assignment, dtype=float)
        if x.size < problem.nvar:
            raise ValueError("decision vector shorter than variable count")
    out = []
    for con in problem.constraints:
        val = con.expr.value(x)
        if con.kind == "psd":
            sym = 0.5 * (val + val.T)
            out.append(float(np.linalg.eigvalsh(sym)[0]) - con.margin)
        elif con.kind == "nonneg":
            out.append(float(val.min()) - con.margin)
        else:
            out.append(-float(np.abs(val).max(initial=0.0)))
    return out
