"""Shared segmented-reduction primitives.

Every row-sum in the library (spmv, smoother sweeps, triangular solves) goes
through the helpers here.  A chunked call on rows [s, e) produces bitwise the
same per-row results as a whole-matrix call, because each row's sum is a pure
function of that row's entries: ``np.add.reduceat`` reduces each segment
independently of its neighbours, and the element-wise product arrays are
identical slices.  That property is what makes worker-count invariance hold
by construction instead of by luck.
"""

from __future__ import annotations

import numpy as np


def segment_sums(products: np.ndarray, ptr: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Sum ``products[ptr[i]:ptr[i+1]]`` for each segment i; empty segments give 0.

    ``products`` may be 1-D (scalar entries) or 2-D of shape (nnz, b)
    (per-entry block rows); segments are taken along axis 0.
    """
    nseg = ptr.shape[0] - 1
    shape = (nseg,) if products.ndim == 1 else (nseg, products.shape[1])
    if out is None:
        out = np.zeros(shape, dtype=products.dtype)
    else:
        out[...] = 0.0
    if nseg == 0 or products.shape[0] == 0:
        return out
    starts = ptr[:-1]
    nonempty = ptr[1:] > starts
    if nonempty.all():
        np.add.reduceat(products, starts, axis=0, out=out)
    else:
        # reduceat cannot take empty segments; consecutive nonempty starts
        # still delimit exactly the nonempty rows because empty rows have
        # zero width in `products`.
        out[nonempty] = np.add.reduceat(products, starts[nonempty], axis=0)
    return out


def row_products(values: np.ndarray, col_idx: np.ndarray, lo: int, hi: int, x: np.ndarray) -> np.ndarray:
    """Element-wise products a_ij * x_j for entries [lo, hi) of a scalar CSR."""
    return values[lo:hi] * x[col_idx[lo:hi]]


def block_row_products(values: np.ndarray, col_idx: np.ndarray, lo: int, hi: int,
                       x2: np.ndarray) -> np.ndarray:
    """Per-entry block products B_ij @ x_j.

    ``values`` has shape (nnz, b, b), ``x2`` shape (ncols, b); the result has
    shape (hi - lo, b).  einsum with the default optimize=False keeps a fixed
    per-element summation order.
    """
    return np.einsum("kij,kj->ki", values[lo:hi], x2[col_idx[lo:hi]])


def apply_block_matrices(mats: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Batched m_k @ v_k for (m, b, b) and (m, b) arrays; fixed-order einsum."""
    return np.einsum("kij,kj->ki", mats, vecs)
