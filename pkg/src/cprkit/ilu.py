"""Block ILU(0) factorization and level-scheduled triangular solves.

The factorization is the standard row-wise IKJ recurrence restricted to the
matrix pattern (no fill); diagonal blocks are inverted in place with partial
pivoting.  Solves are layered by dependency depth so rows within a level run
in parallel, and they are bitwise equal to the plain sequential substitution
because both paths reduce each row's entries with the same primitive in the
same stored order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .parallel import chunk_ranges, run_chunks
from .sparse import BlockCsrMatrix, CsrMatrix, invert_small_blocks, to_block

__all__ = ["BiluFactors", "LevelSchedule", "bilu0_factorize", "level_schedule", "bilu_apply"]

_IDX0 = np.zeros(1, dtype=np.int64)


@dataclass
class LevelSchedule:
    """Rows grouped by dependency depth for one triangular factor."""

    levels: list[np.ndarray]

    @property
    def n_levels(self) -> int:
        return len(self.levels)


def level_schedule(T: CsrMatrix | BlockCsrMatrix) -> LevelSchedule:
    """Layer a (block-)triangular pattern: level(i) = 1 + max level among the
    in-pattern predecessors, 1 when a row has none.

    The orientation (lower or upper) is inferred from the off-diagonal
    pattern; a mixed pattern is rejected.
    """
    n = T.nrows
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(T.row_ptr))
    off = rows != T.col_idx
    below = T.col_idx[off] < rows[off]
    if below.size and below.any() and not below.all():
        raise ValueError("pattern is neither lower nor upper triangular")
    lower = bool(below.all()) if below.size else True
    level = np.zeros(n, dtype=np.int64)
    order = range(n) if lower else range(n - 1, -1, -1)
    for i in order:
        cols = T.col_idx[T.row_ptr[i]:T.row_ptr[i + 1]]
        preds = cols[cols != i]
        level[i] = 1 + (int(level[preds].max()) if preds.size else 0)
    return LevelSchedule([np.flatnonzero(level == l).astype(np.int64)
                          for l in range(1, int(level.max(initial=1)) + 1)])


class _TriSolveData:
    """Strict-triangular split of a factor plus per-level gathered entries."""

    def __init__(self, factor: BlockCsrMatrix, schedule: LevelSchedule):
        n = factor.nrows
        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(factor.row_ptr))
        off = rows != factor.col_idx
        counts = np.zeros(n, dtype=np.int64)
        np.add.at(counts, rows[off], 1)
        self.ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.ptr[1:])
        self.cols = factor.col_idx[off].copy()
        self.vals = factor.values[off].copy()
        self.schedule = schedule
        self.level_data = []
        for lvl in schedule.levels:
            pieces_c, pieces_v, lens = [], [], []
            for i in lvl:
                lo, hi = int(self.ptr[i]), int(self.ptr[i + 1])
                pieces_c.append(self.cols[lo:hi])
                pieces_v.append(self.vals[lo:hi])
                lens.append(hi - lo)
            lptr = np.zeros(len(lvl) + 1, dtype=np.int64)
            np.cumsum(lens, out=lptr[1:])
            cols_g = np.concatenate(pieces_c) if pieces_c else np.zeros(0, dtype=np.int64)
            vals_g = np.concatenate(pieces_v) if pieces_v else np.zeros((0,) + self.vals.shape[1:])
            self.level_data.append((lvl, lptr, cols_g, vals_g))

    def row_sum(self, i: int, x2: np.ndarray) -> np.ndarray:
        lo, hi = int(self.ptr[i]), int(self.ptr[i + 1])
        if hi == lo:
            return np.zeros(x2.shape[1])
        prods = _kernels.block_row_products(self.vals, self.cols, lo, hi, x2)
        return np.add.reduceat(prods, _IDX0, axis=0)[0]

    def level_sums(self, lvl_index: int, x2: np.ndarray, workers: int) -> tuple[np.ndarray, np.ndarray]:
        lvl, lptr, cols_g, vals_g = self.level_data[lvl_index]
        t = np.zeros((lvl.shape[0], x2.shape[1]))

        def work(cs: int, ce: int) -> None:
            lo, hi = int(lptr[cs]), int(lptr[ce])
            prods = _kernels.block_row_products(vals_g, cols_g, lo, hi, x2)
            _kernels.segment_sums(prods, lptr[cs:ce + 1] - lo, out=t[cs:ce])

        run_chunks(work, chunk_ranges(lvl.shape[0], workers))
        return lvl, t


@dataclass
class BiluFactors:
    """L (unit lower) and U (upper) sharing A's pattern, plus solve helpers."""

    L: BlockCsrMatrix
    U: BlockCsrMatrix
    block_size: int
    u_diag_inv: np.ndarray
    l_schedule: LevelSchedule
    u_schedule: LevelSchedule
    _l_solve: _TriSolveData = field(repr=False, default=None)
    _u_solve: _TriSolveData = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.L.nrows

    def __post_init__(self):
        if self._l_solve is None:
            self._l_solve = _TriSolveData(self.L, self.l_schedule)
        if self._u_solve is None:
            self._u_solve = _TriSolveData(self.U, self.u_schedule)


def _invert_pivot(block: np.ndarray, row: int) -> np.ndarray:
    try:
        return invert_small_blocks(block[np.newaxis])[0]
    except np.linalg.LinAlgError:
        fro = float(np.sqrt(np.sum(block * block)))
        if fro == 0.0:
            raise np.linalg.LinAlgError(f"singular pivot block at row {row}") from None
        warnings.warn(f"bilu0: perturbing singular pivot block at row {row}",
                      RuntimeWarning, stacklevel=3)
        bumped = block + 1e-8 * fro * np.eye(block.shape[0])
        try:
            return invert_small_blocks(bumped[np.newaxis])[0]
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(f"singular pivot block at row {row}") from None


def bilu0_factorize(A: CsrMatrix | BlockCsrMatrix) -> BiluFactors:
    """ILU(0): (LU)_ij = A_ij for every stored (i, j); no fill outside the
    pattern.  Scalar input is treated as block size 1.

    A singular pivot with nonzero Frobenius norm is nudged by
    1e-8 * ||block||_F * I and a RuntimeWarning is recorded; a pivot that is
    singular even then (an exact zero block) raises, naming the row.
    """
    if isinstance(A, CsrMatrix):
        A = to_block(A)
    n, b = A.nrows, A.block_size
    if A.nrows != A.ncols:
        raise ValueError("factorization needs a square matrix")
    vals = A.values.copy()
    ptr, cols = A.row_ptr, A.col_idx
    uinv = np.empty((n, b, b))
    for i in range(n):
        lo, hi = int(ptr[i]), int(ptr[i + 1])
        row_cols = cols[lo:hi]
        dk = int(np.searchsorted(row_cols, i))
        # eliminate with previously factored rows k < i in the pattern
        for p in range(lo, lo + dk):
            k = int(cols[p])
            vals[p] = vals[p] @ uinv[k]
            klo, khi = int(ptr[k]), int(ptr[k + 1])
            kcols = cols[klo:khi]
            for q in range(p + 1, hi):
                j = int(cols[q])
                pos = int(np.searchsorted(kcols, j))
                if pos < kcols.shape[0] and kcols[pos] == j:
                    vals[q] = vals[q] - vals[p] @ vals[klo + pos]
        uinv[i] = _invert_pivot(vals[lo + dk], i)

    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(ptr))
    lower = cols < rows
    eye = np.broadcast_to(np.eye(b), (n, b, b))
    L = BlockCsrMatrix.from_block_coo(
        b,
        np.concatenate([rows[lower], np.arange(n)]),
        np.concatenate([cols[lower], np.arange(n)]),
        np.concatenate([vals[lower], eye]),
        (n, n))
    U = BlockCsrMatrix.from_block_coo(b, rows[~lower], cols[~lower], vals[~lower], (n, n))
    return BiluFactors(L, U, b, uinv, level_schedule(L), level_schedule(U))


def bilu_apply(F: BiluFactors, r: np.ndarray, workers: int = 1,
               sequential: bool = False) -> np.ndarray:
    """z = U^{-1} L^{-1} r via level-parallel forward then backward
    substitution; `sequential=True` runs the plain row loop (the two are
    bitwise equal, which the test-suite pins)."""
    n, b = F.n, F.block_size
    if r.shape != (n * b,):
        raise ValueError(f"dimension mismatch: expected vector of length {n * b}")
    r2 = np.asarray(r, dtype=np.float64).reshape(n, b)
    z2 = r2.copy()
    ls, us = F._l_solve, F._u_solve
    if sequential:
        for i in range(n):
            z2[i] = r2[i] - ls.row_sum(i, z2)
        y2 = np.zeros_like(z2)
        for i in range(n - 1, -1, -1):
            rhs = z2[i] - us.row_sum(i, y2)
            y2[i] = _kernels.apply_block_matrices(F.u_diag_inv[i:i + 1], rhs[np.newaxis, :])[0]
        return y2.reshape(-1)
    # level 1 always holds the dependency-free rows, for either orientation
    for li in range(len(ls.level_data)):
        lvl, t = ls.level_sums(li, z2, workers)
        z2[lvl] = r2[lvl] - t
    y2 = np.zeros_like(z2)
    for li in range(len(us.level_data)):
        lvl, t = us.level_sums(li, y2, workers)
        y2[lvl] = _kernels.apply_block_matrices(F.u_diag_inv[lvl], z2[lvl] - t)
    return y2.reshape(-1)
