import numpy as np
import pytest

from cprkit.sparse import (
    BlockCsrMatrix,
    CsrMatrix,
    axpy,
    dot,
    invert_small_blocks,
    norm2,
    spmv,
    to_block,
)

from conftest import random_block, random_sparse


class TestConstruction:
    def test_from_coo_sorts_and_keeps_values(self):
        A = CsrMatrix.from_coo([1, 0, 0], [0, 1, 0], [3.0, 2.0, 1.0], (2, 2))
        assert np.array_equal(A.to_dense(), [[1.0, 2.0], [3.0, 0.0]])

    def test_duplicate_entries_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            CsrMatrix.from_coo([0, 0], [1, 1], [1.0, 2.0], (2, 2))

    def test_duplicate_entries_summed_on_request(self):
        A = CsrMatrix.from_coo([0, 0], [1, 1], [1.0, 2.0], (2, 2), sum_duplicates=True)
        assert A.nnz == 1
        assert A.to_dense()[0, 1] == 3.0

    def test_unsorted_arrays_rejected(self):
        with pytest.raises(ValueError, match="unsorted"):
            CsrMatrix(2, 2, [0, 2, 2], [1, 0], [1.0, 2.0])

    def test_row_ptr_validation(self):
        with pytest.raises(ValueError):
            CsrMatrix(2, 2, [0, 2, 1], [0, 1], [1.0, 2.0])

    def test_block_requires_diagonal(self):
        with pytest.raises(ValueError, match="diagonal block missing"):
            BlockCsrMatrix.from_block_coo(2, [0, 1], [1, 1], np.ones((2, 2, 2)), (2, 2))

    def test_block_expand_round_trip(self, rng):
        A = random_block(rng, 6, b=3)
        S = A.expanded()
        assert S.shape == (18, 18)
        assert np.allclose(S.to_dense(), A.to_dense())


class TestSpmv:
    def test_identity(self):
        # identity on (1,2,3) returns (1,2,3)
        A = CsrMatrix.identity(3)
        assert np.array_equal(spmv(A, np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])

    def test_empty_pattern(self):
        A = CsrMatrix(3, 3, [0, 0, 0, 0], [], [])
        assert np.array_equal(spmv(A, np.ones(3)), np.zeros(3))

    def test_dense_oracle_2x2(self):
        A = CsrMatrix.from_dense([[2.0, -1.0], [-1.0, 2.0]])
        x = np.array([1.0, 1.0])
        expected = A.to_dense() @ x
        assert np.array_equal(spmv(A, x), expected)
        assert np.array_equal(expected, [1.0, 1.0])

    def test_dimension_mismatch(self):
        A = CsrMatrix.identity(3)
        with pytest.raises(ValueError, match="dimension mismatch"):
            spmv(A, np.ones(4))

    def test_columns_reproduced_exhaustively(self, rng):
        # spmv(A, e_j) equals column j for every j, on sizes up to 50
        for n in (1, 7, 23, 50):
            A = random_sparse(rng, n, avg_nnz=4, dominant=False)
            D = A.to_dense()
            for j in range(n):
                e = np.zeros(n)
                e[j] = 1.0
                assert np.array_equal(spmv(A, e), D[:, j]), (n, j)

    def test_worker_invariance(self, rng):
        A = random_sparse(rng, 300, avg_nnz=9)
        x = rng.standard_normal(300)
        base = spmv(A, x, workers=1)
        for w in range(2, 17):
            assert np.array_equal(spmv(A, x, workers=w), base)

    def test_block_spmv_matches_dense(self, rng):
        A = random_block(rng, 5, b=3)
        x = rng.standard_normal(15)
        assert np.allclose(spmv(A, x), A.to_dense() @ x)

    def test_block_dimension_scaled_by_b(self, rng):
        A = random_block(rng, 5, b=3)
        with pytest.raises(ValueError, match="dimension mismatch"):
            spmv(A, np.ones(5))


class TestVectorOps:
    def test_dot_orthogonal(self):
        assert dot(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_norm2_345(self):
        assert norm2(np.array([3.0, 4.0])) == 5.0

    def test_axpy_hand_value(self):
        out = axpy(2.0, np.array([1.0, 1.0]), np.array([1.0, 0.0]))
        assert np.array_equal(out, [3.0, 2.0])

    def test_mismatch_errors(self):
        with pytest.raises(ValueError):
            dot(np.ones(2), np.ones(3))
        with pytest.raises(ValueError):
            axpy(1.0, np.ones(2), np.ones(3))

    def test_reduction_reproducible(self, rng):
        # the reduction tree is fixed: repeated evaluation is bitwise stable
        x = rng.standard_normal(100003)
        y = rng.standard_normal(100003)
        ref = dot(x, y)
        for _ in range(5):
            assert dot(x, y) == ref


class TestHelpers:
    def test_transpose_round_trip(self, rng):
        A = random_sparse(rng, 40, avg_nnz=5, dominant=False)
        assert np.array_equal(A.transpose().transpose().to_dense(), A.to_dense())
        assert np.array_equal(A.transpose().to_dense(), A.to_dense().T)

    def test_permuted_matches_dense(self, rng):
        A = random_sparse(rng, 12, avg_nnz=4, dominant=False)
        perm = rng.permutation(12)
        D = A.to_dense()[np.ix_(perm, perm)]
        assert np.array_equal(A.permuted(perm).to_dense(), D)

    def test_submatrix_matches_dense(self, rng):
        A = random_sparse(rng, 15, avg_nnz=4, dominant=False)
        idx = np.array([3, 7, 1, 10])
        assert np.array_equal(A.submatrix(idx).to_dense(), A.to_dense()[np.ix_(idx, idx)])

    def test_diagonal_missing_reads_zero(self):
        A = CsrMatrix.from_coo([0, 1], [1, 0], [5.0, 6.0], (2, 2))
        assert np.array_equal(A.diagonal(), [0.0, 0.0])

    def test_to_block_roundtrip(self, rng):
        A = random_sparse(rng, 9)
        B = to_block(A)
        assert B.block_size == 1
        assert np.array_equal(B.to_dense(), A.to_dense())

    def test_invert_small_blocks(self, rng):
        blocks = rng.standard_normal((8, 3, 3)) + 4.0 * np.eye(3)
        inv = invert_small_blocks(blocks)
        for k in range(8):
            assert np.allclose(inv[k] @ blocks[k], np.eye(3), atol=1e-12)

    def test_invert_singular_block_names_row(self):
        blocks = np.zeros((2, 2, 2))
        blocks[0] = np.eye(2)
        with pytest.raises(np.linalg.LinAlgError, match="row 1"):
            invert_small_blocks(blocks)
