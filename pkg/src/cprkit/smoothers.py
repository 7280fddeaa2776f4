"""Gauss-Seidel sweep kernels: classic sequential, natural-ordering parallel
baseline (PGS-NO), and the multi-color PGS-SCM built from a strong-connection
partition.

Bitwise discipline: every row update computes

    x_i <- D_ii^{-1} (b_i - sum_{j != i} A_ij x_j)

and, per value kind, every sweep variant routes the off-diagonal sum through
one shared kernel - a plain left-to-right loop over the stored entries for
scalar rows, the segmented-reduction primitive for block rows.  The
multi-color sweep therefore equals sequential GS on the color-permuted
system exactly (not just to roundoff) whenever the partition has no
intra-color couplings (theta = 0), and its output never depends on the
worker count.

PGS-NO is different on purpose: its chunk boundaries are part of the
operator.  Each chunk sweeps its rows sequentially while reads into other
chunks see the sweep-start values, so the result is reproducible given
(matrix, nworkers) but changes with nworkers - the instability the benchmark
baseline is meant to exhibit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .coloring import ColorPartition
from .parallel import chunk_ranges, run_chunks
from .sparse import BlockCsrMatrix, CsrMatrix, invert_small_blocks

__all__ = [
    "SmootherSpec",
    "gs_sweep",
    "pgs_no_sweep",
    "pgs_scm_sweep",
    "make_smoother",
    "ClassicGsSmoother",
    "PgsNoSmoother",
    "PgsScmSmoother",
]

_KINDS = ("classic-gs", "pgs-no", "pgs-scm")
_IDX0 = np.zeros(1, dtype=np.int64)


@dataclass
class SmootherSpec:
    kind: str = "classic-gs"
    sweeps: int = 1
    direction: str = "forward"
    partition: Optional[ColorPartition] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown smoother kind {self.kind!r}; expected one of {_KINDS}")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.direction not in ("forward", "backward", "symmetric"):
            raise ValueError(f"unknown sweep direction {self.direction!r}")
        if self.kind == "pgs-scm" and self.partition is None:
            raise ValueError("pgs-scm requires a ColorPartition")


class _ScalarSplit:
    """Diagonal/off-diagonal split with list mirrors for the row loops.

    Python lists shave several numpy-call overheads per row; python floats
    are the same IEEE doubles, so all sweep variants sharing these loops stay
    bitwise consistent with each other.
    """

    block_size = 1

    def __init__(self, A: CsrMatrix):
        self.n = A.nrows
        rows = np.repeat(np.arange(A.nrows, dtype=np.int64), np.diff(A.row_ptr))
        off = rows != A.col_idx
        counts = np.zeros(A.nrows, dtype=np.int64)
        np.add.at(counts, rows[off], 1)
        ptr = np.zeros(A.nrows + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        diag = A.diagonal()
        zero = np.flatnonzero(diag == 0.0)
        if zero.size:
            raise np.linalg.LinAlgError(f"zero diagonal at row {int(zero[0])}")
        self.ptr = ptr.tolist()
        self.cols = A.col_idx[off].tolist()
        self.vals = A.values[off].tolist()
        self.diag = diag.tolist()

    def sweep_rows(self, b, x, rows) -> None:
        """Classic GS over `rows` in order; b and x are python lists, x is
        updated in place."""
        ptr, cols, vals, diag = self.ptr, self.cols, self.vals, self.diag
        for i in rows:
            s = 0.0
            for p in range(ptr[i], ptr[i + 1]):
                s += vals[p] * x[cols[p]]
            x[i] = (b[i] - s) / diag[i]

    def color_compute(self, b, x, rows, out, base) -> None:
        """Snapshot update: read-only x, results land in out[base:]."""
        ptr, cols, vals, diag = self.ptr, self.cols, self.vals, self.diag
        k = base
        for i in rows:
            s = 0.0
            for p in range(ptr[i], ptr[i + 1]):
                s += vals[p] * x[cols[p]]
            out[k] = (b[i] - s) / diag[i]
            k += 1


class _BlockSplit:
    """Block-diagonal/off-diagonal split; row sums go through the segmented
    reduction so the sequential and color-batched paths agree bitwise."""

    def __init__(self, A: BlockCsrMatrix):
        self.block_size = A.block_size
        self.n = A.nrows
        rows = np.repeat(np.arange(A.nrows, dtype=np.int64), np.diff(A.row_ptr))
        off = rows != A.col_idx
        counts = np.zeros(A.nrows, dtype=np.int64)
        np.add.at(counts, rows[off], 1)
        self.ptr = np.zeros(A.nrows + 1, dtype=np.int64)
        np.cumsum(counts, out=self.ptr[1:])
        self.cols = A.col_idx[off].copy()
        self.vals = A.values[off].copy()
        self.dinv = invert_small_blocks(A.diagonal_blocks())

    def _row_sum(self, i: int, x2: np.ndarray):
        lo, hi = int(self.ptr[i]), int(self.ptr[i + 1])
        if hi == lo:
            return np.zeros(self.block_size)
        prods = _kernels.block_row_products(self.vals, self.cols, lo, hi, x2)
        return np.add.reduceat(prods, _IDX0, axis=0)[0]

    def sweep_rows(self, b2, x2, rows) -> None:
        for i in rows:
            rhs = b2[i] - self._row_sum(i, x2)
            x2[i] = _kernels.apply_block_matrices(self.dinv[i:i + 1], rhs[np.newaxis, :])[0]

    def batch_update(self, b2, x2, s: int, e: int, workers: int) -> None:
        """Snapshot update of rows [s, e): every row reads the pre-update x2."""
        t = np.zeros((e - s, self.block_size))

        def work(cs: int, ce: int) -> None:
            lo, hi = int(self.ptr[s + cs]), int(self.ptr[s + ce])
            prods = _kernels.block_row_products(self.vals, self.cols, lo, hi, x2)
            _kernels.segment_sums(prods, self.ptr[s + cs:s + ce + 1] - lo, out=t[cs:ce])

        run_chunks(work, chunk_ranges(e - s, workers))
        x2[s:e] = _kernels.apply_block_matrices(self.dinv[s:e], b2[s:e] - t)


def _split(A):
    return _BlockSplit(A) if isinstance(A, BlockCsrMatrix) else _ScalarSplit(A)


def _check_pair(A, b, x):
    n = A.nrows * (A.block_size if isinstance(A, BlockCsrMatrix) else 1)
    if b.shape != (n,) or x.shape != (n,):
        raise ValueError(f"vector length must be {n}")


def _passes(direction: str) -> tuple[bool, ...]:
    return {"forward": (False,), "backward": (True,), "symmetric": (False, True)}[direction]


class ClassicGsSmoother:
    """Sequential sweeps; worker count never affects the result."""

    def __init__(self, A):
        self.split = _split(A)

    def apply(self, b, x, workers: int = 1, sweeps: int = 1,
              direction: str = "forward") -> np.ndarray:
        split = self.split
        n = split.n
        if split.block_size == 1:
            xl, bl = x.tolist(), b.tolist()
            for _ in range(sweeps):
                for reverse in _passes(direction):
                    rows = range(n - 1, -1, -1) if reverse else range(n)
                    split.sweep_rows(bl, xl, rows)
            return np.array(xl)
        xw = x.copy()
        b2, x2 = b.reshape(n, -1), xw.reshape(n, -1)
        for _ in range(sweeps):
            for reverse in _passes(direction):
                rows = range(n - 1, -1, -1) if reverse else range(n)
                split.sweep_rows(b2, x2, rows)
        return xw


class PgsNoSmoother:
    """Contiguous-chunk parallel GS: live reads inside a chunk, sweep-start
    values outside. Deterministic given (matrix, nworkers); the operator
    itself changes with nworkers."""

    def __init__(self, A):
        self.split = _split(A)

    def apply(self, b, x, workers: int = 1, sweeps: int = 1,
              direction: str = "forward") -> np.ndarray:
        split = self.split
        n = split.n
        scalar = split.block_size == 1
        xw = x.copy()
        bl = b.tolist() if scalar else b.reshape(n, -1)
        ranges = chunk_ranges(n, workers)
        for _ in range(sweeps):
            for reverse in _passes(direction):
                if scalar:
                    stale = xw.tolist()
                    out = stale.copy()

                    def work(s: int, e: int) -> None:
                        local = stale.copy()
                        rows = range(e - 1, s - 1, -1) if reverse else range(s, e)
                        split.sweep_rows(bl, local, rows)
                        out[s:e] = local[s:e]

                    run_chunks(work, ranges)
                    xw = np.array(out)
                else:
                    stale = xw.copy()
                    out = stale.copy()
                    out2 = out.reshape(n, -1)

                    def work(s: int, e: int) -> None:
                        local = stale.copy().reshape(n, -1)
                        rows = range(e - 1, s - 1, -1) if reverse else range(s, e)
                        split.sweep_rows(bl, local, rows)
                        out2[s:e] = local[s:e]

                    run_chunks(work, ranges)
                    xw = out
        return xw


class PgsScmSmoother:
    """Multi-color sweep on the color-permuted system.

    The matrix is permuted once into concatenated color order, so each
    color's rows are a contiguous slice.  Colors run in order with a barrier
    between them; rows inside a color update against a snapshot of the color
    start (which only matters for the weak intra-color couplings a theta > 0
    partition can leave behind).  A single-color partition degenerates to the
    classic sequential sweep.
    """

    def __init__(self, A: CsrMatrix | BlockCsrMatrix, partition: ColorPartition):
        if partition.n != A.nrows:
            raise ValueError(f"partition covers {partition.n} vertices, matrix has {A.nrows} rows")
        self.partition = partition
        self.perm = partition.perm()
        bsz = A.block_size if isinstance(A, BlockCsrMatrix) else 1
        if bsz == 1:
            self.perm_scalar = self.perm
        else:
            self.perm_scalar = (self.perm[:, None] * bsz + np.arange(bsz)).reshape(-1)
        self.split = _split(A.permuted(self.perm))
        sizes = np.array([g.shape[0] for g in partition.groups], dtype=np.int64)
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        self.color_ranges = [(int(bounds[i]), int(bounds[i + 1]))
                             for i in range(len(partition.groups))]

    def apply(self, b, x, workers: int = 1, sweeps: int = 1,
              direction: str = "forward") -> np.ndarray:
        split = self.split
        bp = b[self.perm_scalar]
        xp = x[self.perm_scalar].copy()
        if split.block_size == 1:
            bl, xl = bp.tolist(), xp.tolist()
            for _ in range(sweeps):
                for reverse in _passes(direction):
                    self._scalar_pass(bl, xl, workers, reverse)
            out = np.empty_like(xp)
            out[self.perm_scalar] = xl
            return out
        b2, x2 = bp.reshape(split.n, -1), xp.reshape(split.n, -1)
        for _ in range(sweeps):
            for reverse in _passes(direction):
                self._block_pass(b2, x2, workers, reverse)
        out = np.empty_like(xp)
        out[self.perm_scalar] = xp
        return out

    def _scalar_pass(self, bl, xl, workers: int, reverse: bool) -> None:
        split = self.split
        if len(self.color_ranges) == 1:
            rows = range(split.n - 1, -1, -1) if reverse else range(split.n)
            split.sweep_rows(bl, xl, rows)
            return
        ranges = self.color_ranges[::-1] if reverse else self.color_ranges
        for s, e in ranges:
            out = [0.0] * (e - s)

            def work(cs: int, ce: int) -> None:
                split.color_compute(bl, xl, range(s + cs, s + ce), out, cs)

            run_chunks(work, chunk_ranges(e - s, workers))
            xl[s:e] = out  # barrier: writes land after every chunk computed

    def _block_pass(self, b2, x2, workers: int, reverse: bool) -> None:
        split = self.split
        if len(self.color_ranges) == 1:
            rows = range(split.n - 1, -1, -1) if reverse else range(split.n)
            split.sweep_rows(b2, x2, rows)
            return
        ranges = self.color_ranges[::-1] if reverse else self.color_ranges
        for s, e in ranges:
            split.batch_update(b2, x2, s, e, workers)


def gs_sweep(A: CsrMatrix | BlockCsrMatrix, b: np.ndarray, x: np.ndarray,
             spec: SmootherSpec | None = None) -> np.ndarray:
    """Classic Gauss-Seidel: updated values are used as soon as they exist.

    Block systems invert the b-by-b diagonal block directly.  Returns the
    updated vector; raises naming the row when a diagonal (block) is
    singular.
    """
    spec = spec or SmootherSpec()
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_pair(A, b, x)
    return ClassicGsSmoother(A).apply(b, x, sweeps=spec.sweeps, direction=spec.direction)


def pgs_no_sweep(A: CsrMatrix | BlockCsrMatrix, b: np.ndarray, x: np.ndarray,
                 nworkers: int) -> np.ndarray:
    """One natural-ordering parallel sweep over contiguous row chunks.

    nworkers = 1 reproduces :func:`gs_sweep` bitwise; larger counts change
    the operator (the documented instability of this baseline).
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_pair(A, b, x)
    return PgsNoSmoother(A).apply(b, x, workers=nworkers)


def pgs_scm_sweep(A: CsrMatrix | BlockCsrMatrix, b: np.ndarray, x: np.ndarray,
                  partition: ColorPartition, workers: int = 1) -> np.ndarray:
    """One multi-color sweep; see :class:`PgsScmSmoother` for semantics."""
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_pair(A, b, x)
    return PgsScmSmoother(A, partition).apply(b, x, workers=workers)


def make_smoother(A, spec: SmootherSpec):
    if spec.kind == "classic-gs":
        return ClassicGsSmoother(A)
    if spec.kind == "pgs-no":
        return PgsNoSmoother(A)
    return PgsScmSmoother(A, spec.partition)
