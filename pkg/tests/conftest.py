import numpy as np
import pytest

from cprkit.sparse import BlockCsrMatrix, CsrMatrix


def tridiag(n, lo=-1.0, di=2.0, up=-1.0):
    rows, cols, vals = [], [], []
    for i in range(n):
        if i > 0:
            rows.append(i); cols.append(i - 1); vals.append(lo)
        rows.append(i); cols.append(i); vals.append(di)
        if i < n - 1:
            rows.append(i); cols.append(i + 1); vals.append(up)
    return CsrMatrix.from_coo(rows, cols, vals, (n, n))


def poisson_2d(nx, ny):
    n = nx * ny
    rows, cols, vals = [], [], []
    for iy in range(ny):
        for ix in range(nx):
            i = ix + nx * iy
            rows.append(i); cols.append(i); vals.append(4.0)
            for jx, jy in ((ix - 1, iy), (ix + 1, iy), (ix, iy - 1), (ix, iy + 1)):
                if 0 <= jx < nx and 0 <= jy < ny:
                    rows.append(i); cols.append(jx + nx * jy); vals.append(-1.0)
    return CsrMatrix.from_coo(rows, cols, vals, (n, n))


def random_sparse(rng, n, avg_nnz=6, dominant=True, symmetric=False):
    """Random canonical CSR with a full diagonal; optionally diagonally dominant."""
    nnz_off = max(0, int(avg_nnz * n) - n)
    rows = rng.integers(0, n, size=nnz_off)
    cols = rng.integers(0, n, size=nnz_off)
    keep = rows != cols
    rows, cols = rows[keep], cols[keep]
    vals = rng.standard_normal(rows.shape[0])
    if symmetric:
        rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
        vals = np.concatenate([vals, vals])
    rows = np.concatenate([rows, np.arange(n)])
    cols = np.concatenate([cols, np.arange(n)])
    vals = np.concatenate([vals, np.ones(n)])
    A = CsrMatrix.from_coo(rows, cols, vals, (n, n), sum_duplicates=True)
    if dominant:
        d = np.zeros(n)
        r = np.repeat(np.arange(n), np.diff(A.row_ptr))
        np.add.at(d, r, np.abs(A.values))
        diag_new = d + 1.0
        for i in range(n):
            lo, hi = A.row_ptr[i], A.row_ptr[i + 1]
            k = lo + np.searchsorted(A.col_idx[lo:hi], i)
            A.values[k] = diag_new[i]
    return A


def random_block(rng, n, b=3, avg_nnz=5):
    """Random block-diagonally-dominant block CSR."""
    nnz_off = max(0, int(avg_nnz * n) - n)
    rows = rng.integers(0, n, size=nnz_off)
    cols = rng.integers(0, n, size=nnz_off)
    keep = rows != cols
    rows, cols = rows[keep], cols[keep]
    blocks = 0.3 * rng.standard_normal((rows.shape[0], b, b))
    rows = np.concatenate([rows, np.arange(n)])
    cols = np.concatenate([cols, np.arange(n)])
    diag = rng.standard_normal((n, b, b)) * 0.2 + np.eye(b) * (avg_nnz + 2.0)
    blocks = np.concatenate([blocks, diag])
    return BlockCsrMatrix.from_block_coo(b, rows, cols, blocks, (n, n),
                                         sum_duplicates=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
