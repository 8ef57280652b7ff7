"""Dense block-matrix algebra, network-matrix checks and the sequential
positive-definiteness recursion used by the decentralized design.

Block indices exposed through :class:`Topology` are 1-based (vehicle
numbering); everything indexing into :class:`BlockMatrix` is 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "BlockMatrix",
    "Topology",
    "SylvesterState",
    "SylvesterResult",
    "StructureError",
    "IllConditionedError",
    "PD_TOL",
    "bew",
    "nested_to_dense",
    "sylvester_decompose",
    "is_network_matrix",
    "lambda_min",
]

# Positive definiteness threshold on lambda_min.
PD_TOL = 1e-8
# Below this |lambda_min| an intermediate pivot is treated as singular.
SINGULAR_TOL = 1e-10
SYMMETRY_TOL = 1e-12
ZERO_TOL = 1e-12


class StructureError(ValueError):
    """Block dimensions or sparsity pattern are inconsistent."""


class IllConditionedError(ArithmeticError):
    """A pivot block of the Sylvester recursion is numerically singular."""

    def __init__(self, index: int, lam: float):
        self.index = index
        self.lam = lam
        super().__init__(
            f"pivot block {index} is singular (lambda_min={lam:.3e})")


def lambda_min(a: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of ``a``."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])


class BlockMatrix:
    """Immutable grid of dense real blocks.

    Parameters
    ----------
    blocks : sequence of sequences of array_like
        ``blocks[i][j]`` is the (i, j) block. Every block in row ``i`` must
        have the same number of rows and every block in column ``j`` the
        same number of columns.
    symmetric : bool
        Flag the matrix as symmetric; verified entrywise to 1e-12.
    """

    def __init__(self, blocks: Sequence[Sequence[np.ndarray]],
                 symmetric: bool = False):
        grid = [[np.array(b, dtype=float, copy=True) for b in row]
                for row in blocks]
        if not grid or not grid[0]:
            raise StructureError("block matrix needs at least one block")
        ncols = len(grid[0])
        for row in grid:
            if len(row) != ncols:
                raise StructureError("ragged block grid")
            for b in row:
                if b.ndim != 2:
                    raise StructureError("blocks must be 2-D arrays")
                b.setflags(write=False)
        self._block_rows = tuple(row[0].shape[0] for row in grid)
        self._block_cols = tuple(grid[0][j].shape[1] for j in range(ncols))
        for i, row in enumerate(grid):
            for j, b in enumerate(row):
                if b.shape != (self._block_rows[i], self._block_cols[j]):
                    raise StructureError(
                        f"block ({i}, {j}) has shape {b.shape}, expected "
                        f"{(self._block_rows[i], self._block_cols[j])}")
        self._blocks = tuple(tuple(row) for row in grid)
        self.symmetric = bool(symmetric)
        if symmetric:
            if self._block_rows != self._block_cols:
                raise StructureError("symmetric matrix needs square grid")
            for i in range(self.n_row_blocks):
                for j in range(i, self.n_col_blocks):
                    if not np.allclose(grid[i][j], grid[j][i].T,
                                       rtol=0.0, atol=SYMMETRY_TOL):
                        raise StructureError(
                            f"blocks ({i}, {j}) and ({j}, {i}) are not "
                            "transposes of each other")

    # construction helpers -------------------------------------------------
    @classmethod
    def from_dense(cls, a: np.ndarray, row_sizes: Sequence[int],
                   col_sizes: Sequence[int] | None = None,
                   symmetric: bool = False) -> "BlockMatrix":
        a = np.asarray(a, dtype=float)
        col_sizes = row_sizes if col_sizes is None else col_sizes
        if sum(row_sizes) != a.shape[0] or sum(col_sizes) != a.shape[1]:
            raise StructureError("block sizes do not tile the matrix")
        r = np.concatenate([[0], np.cumsum(row_sizes)])
        c = np.concatenate([[0], np.cumsum(col_sizes)])
        blocks = [[a[r[i]:r[i + 1], c[j]:c[j + 1]]
                   for j in range(len(col_sizes))]
                  for i in range(len(row_sizes))]
        return cls(blocks, symmetric=symmetric)

    @classmethod
    def uniform(cls, a: np.ndarray, block: int,
                symmetric: bool = False) -> "BlockMatrix":
        """Split a dense matrix into square ``block`` x ``block`` tiles."""
        a = np.asarray(a, dtype=float)
        if a.shape[0] % block or a.shape[1] % block:
            raise StructureError("matrix not divisible into uniform blocks")
        return cls.from_dense(a, [block] * (a.shape[0] // block),
                              [block] * (a.shape[1] // block), symmetric)

    @classmethod
    def block_diag(cls, diag: Sequence[np.ndarray]) -> "BlockMatrix":
        diag = [np.atleast_2d(np.asarray(d, dtype=float)) for d in diag]
        blocks = [[d if i == j else np.zeros((d.shape[0], e.shape[1]))
                   for j, e in enumerate(diag)] for i, d in enumerate(diag)]
        return cls(blocks)

    # accessors ------------------------------------------------------------
    @property
    def n_row_blocks(self) -> int:
        return len(self._block_rows)

    @property
    def n_col_blocks(self) -> int:
        return len(self._block_cols)

    @property
    def block_rows(self) -> tuple[int, ...]:
        return self._block_rows

    @property
    def block_cols(self) -> tuple[int, ...]:
        return self._block_cols

    @property
    def shape(self) -> tuple[int, int]:
        return sum(self._block_rows), sum(self._block_cols)

    def __getitem__(self, ij: tuple[int, int]) -> np.ndarray:
        i, j = ij
        return self._blocks[i][j]

    def to_dense(self) -> np.ndarray:
        return np.block([list(row) for row in self._blocks])

    def transpose(self) -> "BlockMatrix":
        return BlockMatrix([[self._blocks[j][i].T
                             for j in range(self.n_row_blocks)]
                            for i in range(self.n_col_blocks)],
                           symmetric=self.symmetric)

    @property
    def T(self) -> "BlockMatrix":
        return self.transpose()

    def is_block_diagonal(self, tol: float = ZERO_TOL) -> bool:
        return all(np.all(np.abs(self[i, j]) <= tol)
                   for i in range(self.n_row_blocks)
                   for j in range(self.n_col_blocks) if i != j)

    # arithmetic -----------------------------------------------------------
    def _check_same_layout(self, other: "BlockMatrix") -> None:
        if (self.block_rows, self.block_cols) != (other.block_rows,
                                                  other.block_cols):
            raise StructureError("block layouts differ")

    def __add__(self, other: "BlockMatrix") -> "BlockMatrix":
        self._check_same_layout(other)
        return BlockMatrix.from_dense(self.to_dense() + other.to_dense(),
                                      self.block_rows, self.block_cols)

    def __sub__(self, other: "BlockMatrix") -> "BlockMatrix":
        return self + (-1.0) * other

    def __mul__(self, alpha: float) -> "BlockMatrix":
        return BlockMatrix.from_dense(alpha * self.to_dense(),
                                      self.block_rows, self.block_cols)

    __rmul__ = __mul__

    def __matmul__(self, other: "BlockMatrix") -> "BlockMatrix":
        if self.block_cols != other.block_rows:
            raise StructureError("inner block dimensions differ")
        return BlockMatrix.from_dense(self.to_dense() @ other.to_dense(),
                                      self.block_rows, other.block_cols)

    def __repr__(self) -> str:
        return (f"BlockMatrix({self.n_row_blocks}x{self.n_col_blocks} blocks,"
                f" shape={self.shape})")


@dataclass(frozen=True)
class Topology:
    """Directed communication graph; ``(i, j)`` means i receives from j."""

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop at {i}")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise ValueError(f"edge {(i, j)} outside 1..{self.n}")
        object.__setattr__(self, "edges", edges)

    def connected(self, i: int, j: int) -> bool:
        return (i, j) in self.edges or (j, i) in self.edges

    @classmethod
    def from_block_pattern(cls, theta: BlockMatrix,
                           tol: float = ZERO_TOL) -> "Topology":
        """Edges of every nonzero off-diagonal block of ``theta``."""
        n = theta.n_row_blocks
        edges = {(i + 1, j + 1) for i in range(n) for j in range(n)
                 if i != j and np.any(np.abs(theta[i, j]) > tol)}
        return cls(n, frozenset(edges))


def is_network_matrix(theta: BlockMatrix, topo: Topology,
                      tol: float = ZERO_TOL) -> bool:
    """True iff every block between unconnected vehicles is zero."""
    if theta.n_row_blocks != theta.n_col_blocks:
        raise StructureError("network matrices are square block grids")
    if theta.n_row_blocks != topo.n:
        raise StructureError("block count differs from topology size")
    for i in range(topo.n):
        for j in range(topo.n):
            if i == j or topo.connected(i + 1, j + 1):
                continue
            if np.any(np.abs(theta[i, j]) > tol):
                return False
    return True


# block element-wise form --------------------------------------------------

def _as_grid(psi) -> list[list[BlockMatrix]]:
    grid = [list(row) for row in psi]
    m = len(grid)
    if m == 0 or any(len(row) != m for row in grid):
        raise StructureError("outer grid must be square")
    return grid


def bew(psi: Sequence[Sequence[BlockMatrix]]) -> list[list[BlockMatrix]]:
    """Block element-wise rearrangement of a block matrix of block matrices.

    ``psi`` is an ``m x m`` grid whose (k, l) entry is an ``n x n``
    :class:`BlockMatrix`. The result is an ``n x n`` grid whose (i, j)
    entry is the ``m x m`` block matrix ``[psi[k][l][i, j]]_{k,l}``.
    Applying :func:`bew` twice returns the original arrangement.
    """
    grid = _as_grid(psi)
    m = len(grid)
    n = grid[0][0].n_row_blocks
    for k in range(m):
        for l in range(m):
            inner = grid[k][l]
            if inner.n_row_blocks != n or inner.n_col_blocks != n:
                raise StructureError(
                    f"inner matrix ({k}, {l}) is not {n}x{n} blocks")
            if (inner.block_rows != grid[k][0].block_rows
                    or inner.block_cols != grid[0][l].block_cols):
                raise StructureError(
                    f"inner matrix ({k}, {l}) has mismatched block sizes")
    return [[BlockMatrix([[grid[k][l][i, j] for l in range(m)]
                          for k in range(m)])
             for j in range(n)] for i in range(n)]


def nested_to_dense(psi: Sequence[Sequence[BlockMatrix]]) -> np.ndarray:
    """Dense form of a grid of block matrices."""
    return np.block([[inner.to_dense() for inner in row] for row in psi])


# Sylvester-criterion recursion --------------------------------------------

@dataclass
class SylvesterResult:
    """Outcome of :func:`sylvester_decompose`.

    ``diag`` holds the pivots computed before stopping; ``failed_index``
    is the 1-based index of the first non-positive pivot, if any.
    """

    diag: list[np.ndarray]
    failed_index: int | None
    lambdas: list[float]

    @property
    def positive(self) -> bool:
        return self.failed_index is None


class SylvesterState:
    """Incremental block LDL^T factor of a symmetric block matrix.

    Row ``i`` stores ``W~_ij = L_ij D_j`` for ``j < i`` together with the
    pivot ``W~_ii``; only blocks of the new row are needed to extend it.
    """

    def __init__(self, pd_tol: float = PD_TOL,
                 singular_tol: float = SINGULAR_TOL):
        self.pd_tol = pd_tol
        self.singular_tol = singular_tol
        self.factor: list[list[np.ndarray]] = []   # factor[i][j], j < i
        self.pivots: list[np.ndarray] = []
        self._pivot_inv: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.pivots)

    def copy(self) -> "SylvesterState":
        new = SylvesterState(self.pd_tol, self.singular_tol)
        new.factor = [list(row) for row in self.factor]
        new.pivots = list(self.pivots)
        new._pivot_inv = list(self._pivot_inv)
        return new

    def candidate(self, row: Sequence[np.ndarray],
                  diag: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Factor row and pivot for a new row without committing it."""
        i = len(self.pivots)
        if len(row) != i:
            raise StructureError(f"expected {i} off-diagonal blocks")
        new_row: list[np.ndarray] = []
        for j in range(i):
            # W~_ij = W_ij - sum_{k<j} W~_ik D_k W~_jk^T
            acc = np.array(row[j], dtype=float)
            for k in range(j):
                acc = acc - new_row[k] @ self._pivot_inv[k] @ self.factor[j][k].T
            new_row.append(acc)
        pivot = np.array(diag, dtype=float)
        for k in range(i):
            pivot = pivot - new_row[k] @ self._pivot_inv[k] @ new_row[k].T
        pivot = 0.5 * (pivot + pivot.T)
        return new_row, pivot

    def push(self, row: Sequence[np.ndarray], diag: np.ndarray) -> float:
        """Append a block row; returns lambda_min of the new pivot.

        Raises :class:`IllConditionedError` when the pivot is singular
        and leaves the state unchanged when the pivot is not positive.
        """
        new_row, pivot = self.candidate(row, diag)
        lam = lambda_min(pivot)
        index = len(self.pivots) + 1
        if abs(lam) < self.singular_tol:
            raise IllConditionedError(index, lam)
        if lam > self.pd_tol:
            self.factor.append(new_row)
            self.pivots.append(pivot)
            self._pivot_inv.append(np.linalg.inv(pivot))
        return lam


def sylvester_decompose(w: BlockMatrix, pd_tol: float = PD_TOL,
                        singular_tol: float = SINGULAR_TOL
                        ) -> SylvesterResult:
    """Sequential positive-definiteness test of a symmetric block matrix.

    Each pivot is ``W~_ii = W_ii - W~_i D_i W~_i^T``; the matrix is
    positive definite exactly when every pivot is. The recursion stops at
    the first pivot with ``lambda_min <= pd_tol``.

    Raises
    ------
    IllConditionedError
        If a pivot has ``|lambda_min| < singular_tol``.
    """
    if w.n_row_blocks != w.n_col_blocks or w.block_rows != w.block_cols:
        raise StructureError("Sylvester recursion needs a square grid")
    dense = w.to_dense()
    if not np.allclose(dense, dense.T, rtol=0.0, atol=1e-10):
        raise StructureError("matrix is not symmetric")
    state = SylvesterState(pd_tol, singular_tol)
    lambdas: list[float] = []
    for i in range(w.n_row_blocks):
        lam = state.push([w[i, j] for j in range(i)], w[i, i])
        lambdas.append(lam)
        if lam <= pd_tol:
            _, pivot = state.candidate([w[i, j] for j in range(i)], w[i, i])
            return SylvesterResult(state.pivots + [pivot], i + 1, lambdas)
    return SylvesterResult(list(state.pivots), None, lambdas)


def random_network_matrix(topo: Topology, block: int,
                          rng: np.random.Generator,
                          diagonal_only: bool = False) -> BlockMatrix:
    """Random block matrix supported on ``topo`` (test helper)."""
    n = topo.n
    blocks = []
    for i in range(n):
        row = []
        for j in range(n):
            keep = i == j or (not diagonal_only and topo.connected(i + 1, j + 1))
            row.append(rng.uniform(-1, 1, (block, block)) if keep
                       else np.zeros((block, block)))
        blocks.append(row)
    return BlockMatrix(blocks)


def edges_from_pairs(pairs: Iterable[tuple[int, int]]) -> frozenset:
    return frozenset((int(i), int(j)) for i, j in pairs)
