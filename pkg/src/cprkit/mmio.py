"""MatrixMarket coordinate I/O with line-numbered diagnostics.

Hand-rolled instead of scipy.io so parse errors can name the offending line.
Block matrices travel as the expanded b*n scalar system plus a sidecar
comment ``% block_size: b``; dense vectors use the array format.
"""

from __future__ import annotations

import numpy as np

from .sparse import BlockCsrMatrix, CsrMatrix

__all__ = [
    "MatrixMarketError",
    "read_matrix_market",
    "write_matrix_market",
    "read_block_matrix_market",
    "write_block_matrix_market",
    "read_vector",
    "write_vector",
    "fold_block",
]


class MatrixMarketError(ValueError):
    """Malformed MatrixMarket content; message carries the line number."""


def _fail(path, lineno, msg):
    raise MatrixMarketError(f"{path}:{lineno}: {msg}")


def _read_entries(path):
    """Parse a coordinate file; returns (nrows, ncols, rows, cols, vals,
    symmetric, sidecar block size or None, entry line numbers)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines:
        _fail(path, 1, "empty file")
    header = lines[0].strip().split()
    if len(header) != 5 or header[0] != "%%MatrixMarket":
        _fail(path, 1, "malformed header (expected '%%MatrixMarket matrix coordinate real <symmetry>')")
    _, obj, fmt, field_, symmetry = (h.lower() for h in header)
    if obj != "matrix" or fmt != "coordinate":
        _fail(path, 1, f"unsupported object/format '{obj} {fmt}'")
    if field_ != "real":
        _fail(path, 1, f"unsupported field '{field_}' (only real matrices are handled)")
    if symmetry not in ("general", "symmetric"):
        _fail(path, 1, f"unsupported symmetry '{symmetry}'")

    block_size = None
    lineno = 1
    dims = None
    for lineno in range(2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text:
            continue
        if text.startswith("%"):
            body = text.lstrip("%").strip()
            if body.startswith("block_size:"):
                try:
                    block_size = int(body.split(":", 1)[1])
                except ValueError:
                    _fail(path, lineno, "malformed block_size sidecar")
            continue
        parts = text.split()
        if len(parts) != 3:
            _fail(path, lineno, "malformed size line (expected 'nrows ncols nnz')")
        try:
            dims = tuple(int(p) for p in parts)
        except ValueError:
            _fail(path, lineno, "malformed size line (expected integers)")
        break
    if dims is None:
        _fail(path, lineno, "missing size line")
    nrows, ncols, nnz = dims

    rows, cols, vals, linenos = [], [], [], []
    for ln in range(lineno + 1, len(lines) + 1):
        text = lines[ln - 1].strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if len(parts) != 3:
            _fail(path, ln, "malformed entry (expected 'i j value')")
        try:
            i, j = int(parts[0]), int(parts[1])
            v = float(parts[2])
        except ValueError:
            _fail(path, ln, "malformed entry (expected 'i j value')")
        if not (1 <= i <= nrows) or not (1 <= j <= ncols):
            _fail(path, ln, f"index ({i}, {j}) out of range for {nrows}x{ncols} matrix")
        if len(rows) >= nnz:
            _fail(path, ln, f"more than the declared {nnz} entries")
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
        linenos.append(ln)
    if len(rows) != nnz:
        _fail(path, len(lines), f"file declares {nnz} entries but contains {len(rows)}")
    return nrows, ncols, np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), \
        np.array(vals), symmetry == "symmetric", block_size, np.array(linenos, dtype=np.int64)


def _check_duplicates(path, rows, cols, linenos):
    if rows.size == 0:
        return
    order = np.lexsort((cols, rows))
    r, c = rows[order], cols[order]
    dup = (np.diff(r) == 0) & (np.diff(c) == 0)
    if dup.any():
        k = int(np.flatnonzero(dup)[0]) + 1
        _fail(path, int(linenos[order][k]),
              f"duplicate entry ({r[k] + 1}, {c[k] + 1})")


def read_matrix_market(path) -> CsrMatrix:
    """Read a coordinate real general/symmetric file into canonical CSR.

    Symmetric input is expanded to full storage; indices are converted from
    the file's 1-based convention.  Malformed content raises
    :class:`MatrixMarketError` naming the line.
    """
    path = str(path)
    nrows, ncols, rows, cols, vals, symmetric, _, linenos = _read_entries(path)
    _check_duplicates(path, rows, cols, linenos)
    if symmetric and nrows != ncols:
        _fail(path, 1, "symmetric header on a non-square matrix")
    return _assemble(path, nrows, ncols, rows, cols, vals, symmetric, linenos)


def _assemble(path, nrows, ncols, rows, cols, vals, symmetric, linenos) -> CsrMatrix:
    if symmetric:
        off = rows != cols
        rows_full = np.concatenate([rows, cols[off]])
        cols_full = np.concatenate([cols, rows[off]])
        vals_full = np.concatenate([vals, vals[off]])
    else:
        rows_full, cols_full, vals_full = rows, cols, vals
    try:
        return CsrMatrix.from_coo(rows_full, cols_full, vals_full, (nrows, ncols))
    except ValueError as exc:
        # duplicates produced by mirroring (an upper and a lower copy of the
        # same pair) surface here with whatever line info we still have
        raise MatrixMarketError(f"{path}: {exc}") from exc


def write_matrix_market(path, A: CsrMatrix, comments: list[str] | None = None) -> None:
    """Write canonical CSR as coordinate real general with %.17g values
    (read -> write -> read round-trips bitwise)."""
    path = str(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        for c in comments or []:
            fh.write(f"% {c}\n")
        fh.write(f"{A.nrows} {A.ncols} {A.nnz}\n")
        rows = np.repeat(np.arange(A.nrows, dtype=np.int64), np.diff(A.row_ptr))
        for i, j, v in zip(rows, A.col_idx, A.values):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def fold_block(S: CsrMatrix, block_size: int) -> BlockCsrMatrix:
    """Fold an expanded b*n scalar matrix back into b-by-b blocks.

    Scalar entries that fall in the same block are gathered; positions not
    stored read as zero inside their block.
    """
    b = block_size
    if S.nrows % b or S.ncols % b:
        raise ValueError(f"scalar dimensions {S.shape} not divisible by block size {b}")
    nb_r, nb_c = S.nrows // b, S.ncols // b
    rows = np.repeat(np.arange(S.nrows, dtype=np.int64), np.diff(S.row_ptr))
    brow, off_r = rows // b, rows % b
    bcol, off_c = S.col_idx // b, S.col_idx % b
    key = brow * nb_c + bcol
    order = np.argsort(key, kind="stable")
    key_s = key[order]
    uniq, starts = np.unique(key_s, return_index=True)
    blocks = np.zeros((uniq.shape[0], b, b))
    pos = np.searchsorted(uniq, key)
    blocks[pos, off_r, off_c] = S.values
    return BlockCsrMatrix.from_block_coo(b, uniq // nb_c, uniq % nb_c, blocks,
                                         (nb_r, nb_c))


def read_block_matrix_market(path) -> BlockCsrMatrix:
    """Read an expanded scalar file carrying a '% block_size: b' sidecar."""
    path = str(path)
    nrows, ncols, rows, cols, vals, symmetric, block_size, linenos = _read_entries(path)
    if block_size is None:
        _fail(path, 1, "missing '% block_size: b' sidecar for block matrix")
    _check_duplicates(path, rows, cols, linenos)
    S = _assemble(path, nrows, ncols, rows, cols, vals, symmetric, linenos)
    return fold_block(S, block_size)


def write_block_matrix_market(path, A: BlockCsrMatrix) -> None:
    write_matrix_market(path, A.expanded(), comments=[f"block_size: {A.block_size}"])


def read_vector(path) -> np.ndarray:
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketError(f"{path}:1: empty file")
    header = lines[0].strip().split()
    if len(header) != 5 or header[0] != "%%MatrixMarket" or header[2].lower() != "array":
        raise MatrixMarketError(f"{path}:1: expected an array-format vector file")
    body = [ln for ln in lines[1:] if ln.strip() and not ln.strip().startswith("%")]
    if not body:
        raise MatrixMarketError(f"{path}:2: missing size line")
    n, m = (int(p) for p in body[0].split())
    if m != 1:
        raise MatrixMarketError(f"{path}: expected a single-column vector, got {m} columns")
    vals = np.array([float(v) for v in body[1:]])
    if vals.shape[0] != n:
        raise MatrixMarketError(f"{path}: vector declares {n} entries but contains {vals.shape[0]}")
    return vals


def write_vector(path, x: np.ndarray) -> None:
    with open(str(path), "w", encoding="utf-8") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{x.shape[0]} 1\n")
        for v in x:
            fh.write(f"{v:.17g}\n")
