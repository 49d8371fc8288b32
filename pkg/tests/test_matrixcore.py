import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_spd
from ddkalman.decomp import build_space_decomposition, partition_model_matrix, reassemble_model_matrix
from ddkalman.errors import DimensionError, NotPositiveDefiniteError, ShapeError
from ddkalman.matrixcore import (
    IndexSet,
    extend,
    restrict_block,
    restrict_cols,
    restrict_vec,
    spd_solve,
)
from ddkalman.swe import SweGrid, assemble_operators, initial_condition, stable_timestep


class TestIndexSet:
    def test_basic(self):
        J = IndexSet(3, 5)
        assert len(J) == 3
        assert list(J) == [3, 4, 5]
        assert 4 in J and 6 not in J
        assert J.slice == slice(2, 5)

    def test_empty(self):
        J = IndexSet(4, 3)
        assert len(J) == 0
        assert list(J) == []

    def test_rejects_zero_based(self):
        with pytest.raises(DimensionError):
            IndexSet(0, 2)

    def test_from_positions_requires_contiguous(self):
        assert IndexSet.from_positions([2, 3, 4]) == IndexSet(2, 4)
        with pytest.raises(DimensionError):
            IndexSet.from_positions([1, 3])

    def test_set_algebra(self):
        I1, I2 = IndexSet(1, 4), IndexSet(3, 6)
        assert I1.intersection(I2) == IndexSet(3, 4)
        assert I1.difference(I2) == IndexSet(1, 2)
        assert I2.difference(I1) == IndexSet(5, 6)
        assert IndexSet(3, 4).shift(I2) == IndexSet(1, 2)


class TestRestrict:
    def test_cols_example(self):
        B = np.array([[1, 2, 3], [4, 5, 6]])
        np.testing.assert_array_equal(restrict_cols(B, IndexSet(1, 2)), [[1, 2], [4, 5]])

    def test_cols_identity(self):
        np.testing.assert_array_equal(restrict_cols(np.eye(3), IndexSet(2, 3)), np.eye(3)[:, 1:])

    def test_cols_out_of_range(self):
        with pytest.raises(DimensionError):
            restrict_cols(np.eye(3), IndexSet(2, 4))

    def test_block(self):
        B = np.arange(16.0).reshape(4, 4)
        np.testing.assert_array_equal(restrict_block(B, IndexSet(1, 2), IndexSet(1, 2)), B[:2, :2])
        np.testing.assert_array_equal(restrict_block(B, IndexSet(3, 4), IndexSet(1, 2)), B[2:, :2])

    def test_block_out_of_range(self):
        with pytest.raises(DimensionError):
            restrict_block(np.eye(3), IndexSet(1, 4), IndexSet(1, 2))

    def test_swe_block_matches_direct_assembly(self):
        # the I2 block of M1 on n=6 equals M1 assembled on the same rows directly
        grid = SweGrid(6)
        state = initial_condition(grid)
        ops = assemble_operators(state, stable_timestep(state, grid), grid)
        sd = build_space_decomposition(6, 4, 2)
        block = restrict_cols(ops.M1, sd.I2)[sd.I2.slice]
        expected = np.array([[ops.M1[i, j] for j in range(2, 6)] for i in range(2, 6)])
        np.testing.assert_array_equal(block, expected)

    def test_reassembly_bitwise(self, rng):
        M = rng.normal(size=(6, 6))
        sd = build_space_decomposition(6, 3, 0)
        bm = partition_model_matrix(M, sd)
        np.testing.assert_array_equal(reassemble_model_matrix(bm, sd), M)


class TestExtend:
    def test_example(self):
        np.testing.assert_array_equal(extend([5, 7], 2, 4), [0, 5, 7, 0])

    def test_single(self):
        np.testing.assert_array_equal(extend([1], 1, 1), [1])

    def test_span_too_long(self):
        with pytest.raises(DimensionError):
            extend([1, 2, 3], 3, 4)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 20), st.integers(0, 2**31 - 1))
    def test_restrict_extend_roundtrip(self, length, first, pad, seed):
        w = np.random.default_rng(seed).normal(size=length)
        r = first + length - 1 + pad
        v = extend(w, first, r)
        np.testing.assert_array_equal(restrict_vec(v, IndexSet.span(first, length)), w)
        assert np.count_nonzero(v) <= length


class TestSpdSolve:
    def test_identity(self):
        np.testing.assert_allclose(spd_solve(np.eye(2), [[3.0], [4.0]]), [[3.0], [4.0]])

    def test_scalar(self):
        np.testing.assert_allclose(spd_solve([[4.0]], [[2.0]]), [[0.5]])

    def test_residual(self, rng):
        A = random_spd(rng, 5)
        B = rng.normal(size=(5, 3))
        X = spd_solve(A, B)
        res = np.abs(A @ X - B).max()
        assert res <= 1e-10 * np.abs(A).sum(axis=1).max() * np.abs(X).sum(axis=1).max()

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefiniteError):
            spd_solve(np.diag([1.0, -1.0]), np.eye(2))

    def test_asymmetric(self):
        with pytest.raises(ShapeError):
            spd_solve(np.array([[2.0, 1.0], [0.0, 2.0]]), np.eye(2))

    def test_not_square(self):
        with pytest.raises(ShapeError):
            spd_solve(np.ones((2, 3)), np.eye(2))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 50), st.integers(0, 2**31 - 1))
    def test_self_solve_is_identity(self, n, seed):
        A = random_spd(np.random.default_rng(seed), n)
        np.testing.assert_allclose(spd_solve(A, A), np.eye(n), atol=1e-9)
