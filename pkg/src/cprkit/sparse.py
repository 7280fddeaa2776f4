"""Scalar and block compressed-sparse-row storage plus the basic kernels.

Canonical form (column indices strictly increasing within each row, no
duplicate entries) is enforced at construction; every other module assumes
it, which is what makes diagonals O(1)-locatable for the Gauss-Seidel and
ILU kernels.

Vectors are plain 1-D float64 numpy arrays.  ``dot``/``norm2`` reduce in a
fixed pairwise tree (numpy's single-threaded ``add.reduce``), and ``spmv``
computes each row's sum independently, so none of the reductions here can
depend on the worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .parallel import chunk_ranges, run_chunks

__all__ = [
    "CsrMatrix",
    "BlockCsrMatrix",
    "spmv",
    "axpy",
    "dot",
    "norm2",
    "to_block",
    "invert_small_blocks",
]


def _as_index_array(a) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.int64))


def _validate_csr(nrows: int, ncols: int, row_ptr: np.ndarray, col_idx: np.ndarray,
                  nvals: int) -> None:
    if row_ptr.shape != (nrows + 1,):
        raise ValueError(f"row_ptr must have length nrows+1={nrows + 1}, got {row_ptr.shape}")
    if row_ptr[0] != 0 or row_ptr[-1] != col_idx.shape[0]:
        raise ValueError("row_ptr must start at 0 and end at nnz")
    if col_idx.shape[0] != nvals:
        raise ValueError("col_idx and values must have equal length")
    if np.any(np.diff(row_ptr) < 0):
        raise ValueError("row_ptr must be non-decreasing")
    if col_idx.size:
        if col_idx.min() < 0 or col_idx.max() >= ncols:
            raise ValueError("column index out of range")
        # strictly increasing within each row <=> diff > 0 except at row starts
        d = np.diff(col_idx)
        starts = np.zeros(col_idx.shape[0], dtype=bool)
        bounds = row_ptr[1:-1]
        starts[bounds[bounds < col_idx.shape[0]]] = True  # positions where a new row begins
        bad = (d <= 0) & ~starts[1:]
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            row = int(np.searchsorted(row_ptr, k + 1, side="right") - 1)
            if d[k] == 0:
                raise ValueError(f"duplicate entry in row {row}")
            raise ValueError(f"unsorted columns in row {row}")


@dataclass
class CsrMatrix:
    """Canonical CSR matrix with float64 values."""

    nrows: int
    ncols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.row_ptr = _as_index_array(self.row_ptr)
        self.col_idx = _as_index_array(self.col_idx)
        self.values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1:
            raise ValueError("values must be 1-D for a scalar matrix")
        _validate_csr(self.nrows, self.ncols, self.row_ptr, self.col_idx, self.values.shape[0])

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_coo(cls, rows, cols, vals, shape: tuple[int, int],
                 sum_duplicates: bool = False) -> "CsrMatrix":
        """Build canonical CSR from triplets; duplicates either summed or rejected."""
        rows = _as_index_array(rows)
        cols = _as_index_array(cols)
        vals = np.asarray(vals, dtype=np.float64)
        nrows, ncols = shape
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if dup.any():
                if not sum_duplicates:
                    raise ValueError("duplicate (i, j) entries in COO input")
                # collapse runs of equal (i, j); np.add.reduceat per run
                keep = np.concatenate(([True], ~dup))
                starts = np.flatnonzero(keep)
                vals = np.add.reduceat(vals, starts)
                rows, cols = rows[keep], cols[keep]
        row_ptr = np.zeros(nrows + 1, dtype=np.int64)
        np.add.at(row_ptr[1:], rows, 1)
        np.cumsum(row_ptr, out=row_ptr)
        return cls(nrows, ncols, row_ptr, cols, vals)

    @classmethod
    def from_dense(cls, arr) -> "CsrMatrix":
        arr = np.asarray(arr, dtype=np.float64)
        rows, cols = np.nonzero(arr)
        return cls.from_coo(rows, cols, arr[rows, cols], arr.shape)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = m.tocsr().copy()
        m.sort_indices()
        m.sum_duplicates()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    # -- basic queries -----------------------------------------------------

    @property
    def nnz(self) -> int:
        return int(self.col_idx.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.nrows, self.ncols))
        for i in range(self.nrows):
            lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
            out[i, self.col_idx[lo:hi]] = self.values[lo:hi]
        return out

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr),
                             shape=(self.nrows, self.ncols))

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    def diagonal(self) -> np.ndarray:
        """Diagonal values; structurally missing entries read as 0."""
        n = min(self.nrows, self.ncols)
        d = np.zeros(self.nrows)
        for i in range(n):
            cols, vals = self.row(i)
            k = np.searchsorted(cols, i)
            if k < cols.shape[0] and cols[k] == i:
                d[i] = vals[k]
        return d

    def transpose(self) -> "CsrMatrix":
        rows = np.repeat(np.arange(self.nrows, dtype=np.int64), np.diff(self.row_ptr))
        return CsrMatrix.from_coo(self.col_idx, rows, self.values,
                                  (self.ncols, self.nrows))

    def permuted(self, perm: np.ndarray) -> "CsrMatrix":
        """Symmetric permutation: result[i, j] = self[perm[i], perm[j]]."""
        perm = _as_index_array(perm)
        if perm.shape[0] != self.nrows or self.nrows != self.ncols:
            raise ValueError("permutation requires a square matrix of matching size")
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.shape[0], dtype=np.int64)
        rows = np.repeat(np.arange(self.nrows, dtype=np.int64), np.diff(self.row_ptr))
        return CsrMatrix.from_coo(inv[rows], inv[self.col_idx], self.values, self.shape)

    def submatrix(self, idx: np.ndarray) -> "CsrMatrix":
        """Principal submatrix self[idx][:, idx] (idx need not be sorted)."""
        idx = _as_index_array(idx)
        lookup = np.full(self.ncols, -1, dtype=np.int64)
        lookup[idx] = np.arange(idx.shape[0], dtype=np.int64)
        rows_out, cols_out, vals_out = [], [], []
        for new_i, i in enumerate(idx):
            cols, vals = self.row(int(i))
            local = lookup[cols]
            keep = local >= 0
            rows_out.append(np.full(int(keep.sum()), new_i, dtype=np.int64))
            cols_out.append(local[keep])
            vals_out.append(vals[keep])
        if rows_out:
            return CsrMatrix.from_coo(np.concatenate(rows_out), np.concatenate(cols_out),
                                      np.concatenate(vals_out), (idx.shape[0], idx.shape[0]))
        return CsrMatrix(idx.shape[0], idx.shape[0], np.zeros(idx.shape[0] + 1, dtype=np.int64),
                         np.zeros(0, dtype=np.int64), np.zeros(0))


@dataclass
class BlockCsrMatrix:
    """CSR skeleton with b-by-b dense blocks, row-major within each block.

    Every diagonal block must be structurally present (the BILU(0) and
    Gauss-Seidel kernels rely on it).
    """

    block_size: int
    nrows: int
    ncols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _expanded: "CsrMatrix | None" = field(default=None, repr=False, compare=False)
    _frobenius: "CsrMatrix | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        b = self.block_size
        if b < 1:
            raise ValueError("block_size must be >= 1")
        self.row_ptr = _as_index_array(self.row_ptr)
        self.col_idx = _as_index_array(self.col_idx)
        self.values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if self.values.shape != (self.col_idx.shape[0], b, b):
            raise ValueError(f"values must have shape (nnz, {b}, {b})")
        _validate_csr(self.nrows, self.ncols, self.row_ptr, self.col_idx, self.values.shape[0])
        for i in range(min(self.nrows, self.ncols)):
            cols = self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]
            k = np.searchsorted(cols, i)
            if k >= cols.shape[0] or cols[k] != i:
                raise ValueError(f"diagonal block missing in row {i}")

    @classmethod
    def from_block_coo(cls, block_size: int, rows, cols, blocks, shape: tuple[int, int],
                       sum_duplicates: bool = False) -> "BlockCsrMatrix":
        rows = _as_index_array(rows)
        cols = _as_index_array(cols)
        blocks = np.asarray(blocks, dtype=np.float64)
        nrows, ncols = shape
        order = np.lexsort((cols, rows))
        rows, cols, blocks = rows[order], cols[order], blocks[order]
        if rows.size:
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if dup.any():
                if not sum_duplicates:
                    raise ValueError("duplicate (i, j) blocks in COO input")
                keep = np.concatenate(([True], ~dup))
                starts = np.flatnonzero(keep)
                blocks = np.add.reduceat(blocks, starts, axis=0)
                rows, cols = rows[keep], cols[keep]
        row_ptr = np.zeros(nrows + 1, dtype=np.int64)
        np.add.at(row_ptr[1:], rows, 1)
        np.cumsum(row_ptr, out=row_ptr)
        return cls(block_size, nrows, ncols, row_ptr, cols, blocks)

    @property
    def nnz(self) -> int:
        return int(self.col_idx.shape[0])

    @property
    def scalar_shape(self) -> tuple[int, int]:
        return (self.nrows * self.block_size, self.ncols * self.block_size)

    def diagonal_blocks(self) -> np.ndarray:
        out = np.empty((self.nrows, self.block_size, self.block_size))
        for i in range(self.nrows):
            cols = self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]
            k = int(self.row_ptr[i]) + int(np.searchsorted(cols, i))
            out[i] = self.values[k]
        return out

    def expanded(self) -> CsrMatrix:
        """Scalar CSR of the b*n expanded system (cached)."""
        if self._expanded is None:
            b = self.block_size
            nnz = self.nnz
            rows_b = np.repeat(np.arange(self.nrows, dtype=np.int64), np.diff(self.row_ptr))
            # each block contributes b*b scalar entries in row-major order
            rr = np.repeat(rows_b, b * b) * b + np.tile(np.repeat(np.arange(b), b), nnz)
            cc = np.repeat(self.col_idx, b * b) * b + np.tile(np.tile(np.arange(b), b), nnz)
            self._expanded = CsrMatrix.from_coo(rr, cc, self.values.reshape(-1),
                                                self.scalar_shape)
        return self._expanded

    def frobenius(self) -> CsrMatrix:
        """Scalar matrix of block Frobenius norms (cached); feeds Eq.-style
        strength-of-connection filtering for block systems."""
        if self._frobenius is None:
            norms = np.sqrt(np.einsum("kij,kij->k", self.values, self.values))
            self._frobenius = CsrMatrix(self.nrows, self.ncols, self.row_ptr.copy(),
                                        self.col_idx.copy(), norms)
        return self._frobenius

    def permuted(self, perm: np.ndarray) -> "BlockCsrMatrix":
        perm = _as_index_array(perm)
        if perm.shape[0] != self.nrows or self.nrows != self.ncols:
            raise ValueError("permutation requires a square matrix of matching size")
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.shape[0], dtype=np.int64)
        rows = np.repeat(np.arange(self.nrows, dtype=np.int64), np.diff(self.row_ptr))
        return BlockCsrMatrix.from_block_coo(self.block_size, inv[rows], inv[self.col_idx],
                                             self.values, (self.nrows, self.ncols))

    def to_dense(self) -> np.ndarray:
        return self.expanded().to_dense()


def to_block(A: CsrMatrix, block_size: int = 1) -> BlockCsrMatrix:
    """View a scalar matrix as a block matrix with 1x1 blocks."""
    if block_size != 1:
        raise ValueError("only 1x1 reinterpretation is supported")
    return BlockCsrMatrix(1, A.nrows, A.ncols, A.row_ptr.copy(), A.col_idx.copy(),
                          A.values.reshape(-1, 1, 1).copy())


# -- kernels ---------------------------------------------------------------


def _spmv_scalar(A: CsrMatrix, x: np.ndarray, workers: int) -> np.ndarray:
    y = np.zeros(A.nrows)
    ptr, cols, vals = A.row_ptr, A.col_idx, A.values

    def work(s: int, e: int) -> None:
        lo, hi = int(ptr[s]), int(ptr[e])
        prods = _kernels.row_products(vals, cols, lo, hi, x)
        _kernels.segment_sums(prods, ptr[s:e + 1] - lo, out=y[s:e])

    run_chunks(work, chunk_ranges(A.nrows, workers))
    return y


def spmv(A: CsrMatrix | BlockCsrMatrix, x: np.ndarray, workers: int = 1) -> np.ndarray:
    """y = A @ x, row-parallel with per-row independent sums.

    Bitwise identical for every worker count: each row is reduced by the same
    segmented primitive over the same entry order regardless of chunking.
    """
    x = np.asarray(x, dtype=np.float64)
    if isinstance(A, BlockCsrMatrix):
        S = A.expanded()
        if x.shape != (S.ncols,):
            raise ValueError(f"dimension mismatch: matrix has {S.ncols} scalar columns, "
                             f"vector has length {x.shape[0]}")
        return _spmv_scalar(S, x, workers)
    if x.shape != (A.ncols,):
        raise ValueError(f"dimension mismatch: matrix has {A.ncols} columns, "
                         f"vector has length {x.shape[0]}")
    return _spmv_scalar(A, x, workers)


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """alpha * x + y, returned as a new vector."""
    if x.shape != y.shape:
        raise ValueError("dimension mismatch in axpy")
    return alpha * x + y


def dot(x: np.ndarray, y: np.ndarray) -> float:
    """Inner product with a fixed pairwise reduction tree (worker-independent)."""
    if x.shape != y.shape:
        raise ValueError("dimension mismatch in dot")
    return float(np.add.reduce(x * y))


def norm2(x: np.ndarray) -> float:
    return math.sqrt(dot(x, x))


def invert_small_blocks(blocks: np.ndarray) -> np.ndarray:
    """Invert a batch of small dense blocks by Gaussian elimination with
    partial pivoting; raises naming the block index on singularity."""
    m, b, _ = blocks.shape
    out = np.empty_like(blocks)
    for k in range(m):
        a = blocks[k].copy()
        inv = np.eye(b)
        for col in range(b):
            p = col + int(np.argmax(np.abs(a[col:, col])))
            if a[p, col] == 0.0:
                raise np.linalg.LinAlgError(f"singular diagonal block at row {k}")
            if p != col:
                a[[col, p]] = a[[p, col]]
                inv[[col, p]] = inv[[p, col]]
            piv = a[col, col]
            a[col] /= piv
            inv[col] /= piv
            for r in range(b):
                if r != col and a[r, col] != 0.0:
                    f = a[r, col]
                    a[r] -= f * a[col]
                    inv[r] -= f * inv[col]
        out[k] = inv
    return out
