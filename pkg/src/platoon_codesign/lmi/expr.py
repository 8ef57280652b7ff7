"""Sparse affine matrix expressions over a flat vector of decision scalars.

An :class:`Affine` of shape ``(m, n)`` stores ``vec(F(x)) = A x + c`` with
``vec`` taken row-major. ``A`` is a CSR matrix with one column per scalar
decision variable; expressions built before later variables were created
simply carry fewer columns and are padded on demand.
"""

from __future__ import annotations

from numbers import Number
from typing import Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Affine",
    "MatrixVar",
    "as_affine",
    "bmat",
    "hstack",
    "vstack",
    "block_diag",
    "zeros",
]


def _pad(a: sp.csr_matrix, nv: int) -> sp.csr_matrix:
    if a.shape[1] == nv:
        return a
    if a.shape[1] > nv:
        raise ValueError("cannot shrink variable space")
    return sp.csr_matrix((a.data, a.indices, a.indptr), shape=(a.shape[0], nv))


class Affine:
    """Affine function of the decision vector with a matrix value."""

    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, shape: tuple[int, int], coeff: sp.spmatrix,
                 const: np.ndarray):
        self.shape = (int(shape[0]), int(shape[1]))
        self.coeff = sp.csr_matrix(coeff)
        self.const = np.asarray(const, dtype=float).reshape(-1)
        if self.coeff.shape[0] != self.size or self.const.size != self.size:
            raise ValueError("coefficient rows do not match shape")

    # basic properties -----------------------------------------------------
    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def nvar(self) -> int:
        return self.coeff.shape[1]

    @property
    def is_constant(self) -> bool:
        return self.coeff.nnz == 0

    @classmethod
    def constant(cls, value) -> "Affine":
        v = np.atleast_2d(np.asarray(value, dtype=float))
        if v.ndim != 2:
            raise ValueError("constants must be at most 2-D")
        return cls(v.shape, sp.csr_matrix((v.size, 0)), v.reshape(-1))

    def value(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at the decision vector ``x``."""
        x = np.asarray(x, dtype=float)
        a = self.coeff
        if x.size < a.shape[1]:
            raise ValueError("decision vector too short")
        out = a @ x[:a.shape[1]] + self.const
        return out.reshape(self.shape)

    # arithmetic -----------------------------------------------------------
    def _binary(self, other) -> "Affine":
        other = as_affine(other)
        if other.shape != self.shape:
            if other.shape == (1, 1) and other.is_constant:
                other = Affine.constant(np.full(self.shape, other.const[0]))
            else:
                raise ValueError(
                    f"shape mismatch {self.shape} vs {other.shape}")
        return other

    def __add__(self, other) -> "Affine":
        other = self._binary(other)
        nv = max(self.nvar, other.nvar)
        return Affine(self.shape, _pad(self.coeff, nv) + _pad(other.coeff, nv),
                      self.const + other.const)

    __radd__ = __add__

    def __neg__(self) -> "Affine":
        return Affine(self.shape, -self.coeff, -self.const)

    def __sub__(self, other) -> "Affine":
        return self + (-as_affine(other))

    def __rsub__(self, other) -> "Affine":
        return as_affine(other) + (-self)

    def __mul__(self, other) -> "Affine":
        if isinstance(other, Affine):
            if other.is_constant:
                other = other.const.reshape(other.shape)
            elif self.is_constant:
                return other * self.const.reshape(self.shape)
            else:
                raise TypeError("product of two non-constant expressions")
        if isinstance(other, Number) or np.ndim(other) == 0:
            a = float(other)
            return Affine(self.shape, a * self.coeff, a * self.const)
        m = np.atleast_2d(np.asarray(other, dtype=float))
        if self.shape == (1, 1):
            # scalar expression times constant matrix
            v = m.reshape(-1, 1)
            coeff = sp.csr_matrix(v) @ self.coeff if self.nvar else \
                sp.csr_matrix((m.size, 0))
            return Affine(m.shape, coeff, v[:, 0] * self.const[0])
        if m.shape == self.shape:
            d = sp.diags(m.reshape(-1))
            return Affine(self.shape, d @ self.coeff, m.reshape(-1) * self.const)
        raise ValueError(f"cannot multiply {self.shape} by {m.shape}")

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Affine":
        return self * (1.0 / float(other))

    def __matmul__(self, other) -> "Affine":
        other = _const_array(other)
        m, n = self.shape
        if other.shape[0] != n:
            raise ValueError(f"matmul mismatch {self.shape} @ {other.shape}")
        k = other.shape[1]
        # vec(X B) = (I_m kron B^T) vec(X)
        t = sp.kron(sp.identity(m, format="csr"), sp.csr_matrix(other.T),
                    format="csr")
        return Affine((m, k), t @ self.coeff, t @ self.const)

    def __rmatmul__(self, other) -> "Affine":
        other = _const_array(other)
        m, n = self.shape
        if other.shape[1] != m:
            raise ValueError(f"matmul mismatch {other.shape} @ {self.shape}")
        p = other.shape[0]
        # vec(A X) = (A kron I_n) vec(X)
        t = sp.kron(sp.csr_matrix(other), sp.identity(n, format="csr"),
                    format="csr")
        return Affine((p, n), t @ self.coeff, t @ self.const)

    # structural -----------------------------------------------------------
    def _take(self, idx: np.ndarray) -> "Affine":
        idx = np.atleast_2d(idx)
        flat = idx.reshape(-1)
        return Affine(idx.shape, self.coeff[flat], self.const[flat])

    @property
    def T(self) -> "Affine":
        m, n = self.shape
        return self._take(np.arange(m * n).reshape(m, n).T)

    def __getitem__(self, key) -> "Affine":
        grid = np.arange(self.size).reshape(self.shape)
        sub = grid[key]
        if np.ndim(sub) == 0:
            sub = np.array([[sub]])
        elif np.ndim(sub) == 1:
            # keep orientation: integer row index gives a row vector
            if isinstance(key, tuple) and isinstance(key[0], (int, np.integer)):
                sub = sub[None, :]
            else:
                sub = sub[:, None]
        return self._take(sub)

    def sum(self) -> "Affine":
        return Affine((1, 1), sp.csr_matrix(self.coeff.sum(axis=0)),
                      [self.const.sum()])

    def symmetric_part(self) -> "Affine":
        return 0.5 * (self + self.T)

    def asymmetry(self) -> float:
        """Largest coefficient or constant mismatch between F and F^T."""
        if self.shape[0] != self.shape[1]:
            return np.inf
        d = self - self.T
        c = np.abs(d.const).max(initial=0.0)
        a = np.abs(d.coeff.data).max(initial=0.0)
        return float(max(c, a))

    def __repr__(self) -> str:
        return f"Affine(shape={self.shape}, nvar={self.nvar}, nnz={self.coeff.nnz})"


class MatrixVar(Affine):
    """Matrix decision variable.

    Only entries permitted by ``mask`` are free; a symmetric variable has
    one scalar per masked entry of its lower triangle.
    """

    def __init__(self, name: str, shape: tuple[int, int], offset: int,
                 symmetric: bool = False, mask: np.ndarray | None = None,
                 lb=None, ub=None):
        m, n = int(shape[0]), int(shape[1])
        if symmetric and m != n:
            raise ValueError("symmetric variables must be square")
        mask = np.ones((m, n), bool) if mask is None else \
            np.asarray(mask, dtype=bool)
        if mask.shape != (m, n):
            raise ValueError("mask shape differs from variable shape")
        if symmetric:
            mask = mask | mask.T
        index = -np.ones((m, n), dtype=int)
        k = 0
        for i in range(m):
            for j in range(n):
                if not mask[i, j]:
                    continue
                if symmetric and j > i:
                    continue
                index[i, j] = offset + k
                if symmetric:
                    index[j, i] = offset + k
                k += 1
        self.name = name
        self.symmetric = symmetric
        self.mask = mask
        self.offset = offset
        self.n_free = k
        self.index = index
        self.lb = None if lb is None else np.broadcast_to(
            np.asarray(lb, dtype=float), (m, n)).copy()
        self.ub = None if ub is None else np.broadcast_to(
            np.asarray(ub, dtype=float), (m, n)).copy()
        flat = index.reshape(-1)
        rows = np.nonzero(flat >= 0)[0]
        coeff = sp.csr_matrix((np.ones(rows.size), (rows, flat[rows])),
                              shape=(m * n, offset + k))
        super().__init__((m, n), coeff, np.zeros(m * n))

    def free_entries(self) -> list[tuple[int, int]]:
        """(row, col) of each free scalar, in storage order."""
        out = [None] * self.n_free
        for i in range(self.shape[0]):
            for j in range(self.shape[1]):
                k = self.index[i, j]
                if k >= 0 and out[k - self.offset] is None:
                    out[k - self.offset] = (i, j)
        return out

    def extract(self, x: np.ndarray) -> np.ndarray:
        return self.value(x)

    def pack(self, value: np.ndarray) -> np.ndarray:
        """Free scalars of ``value`` in storage order."""
        value = np.atleast_2d(np.asarray(value, dtype=float))
        if value.shape != self.shape:
            raise ValueError(
                f"{self.name}: expected shape {self.shape}, got {value.shape}")
        return np.array([value[i, j] for i, j in self.free_entries()])


def _const_array(x) -> np.ndarray:
    if isinstance(x, Affine):
        if not x.is_constant:
            raise TypeError("product of two non-constant expressions")
        return x.const.reshape(x.shape)
    return np.atleast_2d(np.asarray(x, dtype=float))


def as_affine(x) -> Affine:
    if isinstance(x, Affine):
        return x
    return Affine.constant(x)


def zeros(m: int, n: int) -> Affine:
    return Affine.constant(np.zeros((m, n)))


def bmat(grid: Sequence[Sequence]) -> Affine:
    """Assemble a block expression; ``None`` entries become zero blocks."""
    rows = len(grid)
    cols = len(grid[0])
    heights = [None] * rows
    widths = [None] * cols
    for i, row in enumerate(grid):
        if len(row) != cols:
            raise ValueError("ragged block grid")
        for j, b in enumerate(row):
            if b is None:
                continue
            shape = b.shape if isinstance(b, Affine) else np.atleast_2d(b).shape
            if heights[i] is None:
                heights[i] = shape[0]
            if widths[j] is None:
                widths[j] = shape[1]
            if (heights[i], widths[j]) != tuple(shape):
                raise ValueError(f"block ({i}, {j}) has shape {shape}")
    if any(h is None for h in heights) or any(w is None for w in widths):
        raise ValueError("every block row and column needs a sized entry")
    r0 = np.concatenate([[0], np.cumsum(heights)])
    c0 = np.concatenate([[0], np.cumsum(widths)])
    total_m, total_n = int(r0[-1]), int(c0[-1])
    blocks = [[as_affine(b) for b in row if b is not None] for row in grid]
    nv = max((b.nvar for row in blocks for b in row), default=0)
    const = np.zeros(total_m * total_n)
    coo_r, coo_c, coo_v = [], [], []
    for i, row in enumerate(grid):
        for j, b in enumerate(row):
            if b is None:
                continue
            b = as_affine(b)
            h, w = b.shape
            rr, cc = np.divmod(np.arange(h * w), w)
            target = (r0[i] + rr) * total_n + (c0[j] + cc)
            const[target] = b.const
            if b.coeff.nnz:
                a = b.coeff.tocoo()
                coo_r.append(target[a.row])
                coo_c.append(a.col)
                coo_v.append(a.data)
    if coo_r:
        coeff = sp.csr_matrix((np.concatenate(coo_v),
                               (np.concatenate(coo_r), np.concatenate(coo_c))),
                              shape=(total_m * total_n, nv))
    else:
        coeff = sp.csr_matrix((total_m * total_n, nv))
    return Affine((total_m, total_n), coeff, const)


def hstack(items: Sequence) -> Affine:
    return bmat([list(items)])


def vstack(items: Sequence) -> Affine:
    return bmat([[b] for b in items])


def block_diag(items: Sequence) -> Affine:
    items = [as_affine(b) for b in items]
    grid = []
    for i, bi in enumerate(items):
        row = []
        for j, bj in enumerate(items):
            row.append(bi if i == j else np.zeros((bi.shape[0], bj.shape[1])))
        grid.append(row)
    return bmat(grid)
