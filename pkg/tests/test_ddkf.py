import numpy as np
import pytest

from conftest import random_spd, random_tridiagonal
from ddkalman.ddkf import (
    DdkfProblem,
    LocalFilterState,
    MultiDdkfProblem,
    coupling_vectors,
    ddkf_correct,
    ddkf_gains,
    ddkf_predict,
    ddkf_step,
    merge_multi,
    merge_overlap,
    multi_ddkf_step,
    run_windows,
)
from ddkalman.decomp import (
    build_multi_decomposition,
    build_space_decomposition,
    build_time_decomposition,
    partition_model_matrix,
)
from ddkalman.errors import DimensionError
from ddkalman.kf import GlobalFilterState, LinearGaussianSystem, kf_gain, kf_predict, kf_run, kf_step
from ddkalman.matrixcore import restrict_block, restrict_vec
from ddkalman.swe import SweGrid, assemble_operators, initial_condition, stable_timestep


def random_system(rng, n, m, steps, tridiagonal=True):
    M = random_tridiagonal(rng, n) if tridiagonal else rng.normal(size=(n, n)) / np.sqrt(n)
    return LinearGaussianSystem(
        M, rng.normal(size=n), rng.normal(size=(m, n)), random_spd(rng, n, 0.5) / n,
        random_spd(rng, m, 1.0) / m, steps=steps)


def restricted(state, subsets):
    return [restrict_vec(state.x_hat, I) for I in subsets]


def max_dev(dd, kfs, subsets):
    return max(np.abs(a - b).max() for a, b in zip(dd.x, restricted(kfs, subsets)))


def run_both(sys, sd, x0, P0, ys, banded=True):
    prob = DdkfProblem(sys, sd, banded=banded)
    st = prob.initial_state(x0, P0)
    g = GlobalFilterState(x0, P0)
    devs = []
    for y in ys:
        st = ddkf_step(prob, st, y)
        g = kf_step(g, sys, y)
        devs.append(max_dev(st, g, sd.subsets))
    return st, g, devs


class TestCoupling:
    def test_decoupled(self):
        sd = build_space_decomposition(4, 2, 0)
        bm = partition_model_matrix(np.eye(4), sd)
        b1, b2 = coupling_vectors(bm, np.ones(2), np.ones(2))
        assert not b1.any() and not b2.any()

    def test_single_column(self):
        M = np.eye(4)
        M[1, 2] = 3.0
        bm = partition_model_matrix(M, build_space_decomposition(4, 2, 0))
        b1, _ = coupling_vectors(bm, np.zeros(2), np.array([5.0, 7.0]))
        np.testing.assert_array_equal(b1, [0.0, 15.0])

    @pytest.mark.parametrize("s", [0, 2])
    def test_swe_boundary_term(self, rng, s):
        grid = SweGrid(6)
        st = initial_condition(grid)
        M = assemble_operators(st, stable_timestep(st, grid), grid).M1
        sd = build_space_decomposition(6, 3 + s // 2, s)
        bm = partition_model_matrix(M, sd)
        x = rng.normal(size=6)
        x1, x2 = x[sd.I1.slice], x[sd.I2.slice]
        b1, b2 = coupling_vectors(bm, x1, x2)
        assert np.abs((M @ x)[sd.I1.slice] - (bm.M1 @ x1 + b1)).max() <= 1e-12
        assert np.abs((M @ x)[sd.I2.slice] - (bm.M2 @ x2 + b2)).max() <= 1e-12


class TestPredict:
    def test_decoupled_runs_independent_kfs(self, rng):
        n = 4
        M = np.zeros((n, n))
        M[:2, :2] = rng.normal(size=(2, 2))
        M[2:, 2:] = rng.normal(size=(2, 2))
        P = np.zeros((n, n))
        P[:2, :2] = random_spd(rng, 2)
        P[2:, 2:] = random_spd(rng, 2)
        Q = np.zeros((n, n))
        Q[:2, :2] = random_spd(rng, 2)
        Q[2:, 2:] = random_spd(rng, 2)
        sys = LinearGaussianSystem(M, np.zeros(n), np.eye(1, n), Q, np.eye(1), steps=1)
        sd = build_space_decomposition(n, 2, 0)
        prob = DdkfProblem(sys, sd)
        pred = ddkf_predict(prob, prob.initial_state(np.ones(n), P))
        np.testing.assert_allclose(pred.P1, M[:2, :2] @ P[:2, :2] @ M[:2, :2].T + Q[:2, :2], atol=1e-14)
        np.testing.assert_allclose(pred.P2, M[2:, 2:] @ P[2:, 2:] @ M[2:, 2:].T + Q[2:, 2:], atol=1e-14)
        assert not pred.P12.any()

    @pytest.mark.parametrize("s,banded", [(0, True), (0, False), (2, True), (2, False)])
    def test_block_vs_full(self, rng, s, banded):
        n = 4 if s == 0 else 6
        sys = random_system(rng, n, 2, 1, tridiagonal=(s > 0))
        sd = build_space_decomposition(n, n // 2 + s // 2, s)
        P = random_spd(rng, n)
        x = rng.normal(size=n)
        prob = DdkfProblem(sys, sd, banded=banded)
        pred = ddkf_predict(prob, prob.initial_state(x, P))
        xf, Pf = kf_predict(GlobalFilterState(x, P), sys)
        I1, I2 = sd.I1, sd.I2
        for got, want in [(pred.P1, restrict_block(Pf, I1, I1)), (pred.P2, restrict_block(Pf, I2, I2)),
                          (pred.P12, restrict_block(Pf, I1, I2)), (pred.P21, restrict_block(Pf, I2, I1))]:
            assert np.abs(got - want).max() <= 1e-12
        assert np.abs(pred.x1 - restrict_vec(xf, I1)).max() <= 1e-12
        assert np.abs(pred.x2 - restrict_vec(xf, I2)).max() <= 1e-12


class TestGains:
    def test_scalar_split(self):
        sys = LinearGaussianSystem(np.eye(2), np.zeros(2), np.array([[1.0, 1.0]]), np.zeros((2, 2)),
                                   np.eye(1), steps=1)
        sd = build_space_decomposition(2, 1, 0)
        prob = DdkfProblem(sys, sd)
        pred = ddkf_predict(prob, prob.initial_state(np.zeros(2), np.eye(2)))
        B = prob.blocks(0)
        K1, K2, F = ddkf_gains(pred, B.H1, B.H2, B.R)
        assert F[0, 0] == pytest.approx(3.0)
        assert K1[0, 0] == pytest.approx(1 / 3) and K2[0, 0] == pytest.approx(1 / 3)

    def test_h2_zero_reduces_to_local_kf(self, rng):
        sd = build_space_decomposition(4, 2, 0)
        H = np.zeros((2, 4))
        H[:, :2] = rng.normal(size=(2, 2))
        P = np.zeros((4, 4))
        P[:2, :2] = random_spd(rng, 2)
        P[2:, 2:] = random_spd(rng, 2)
        R = random_spd(rng, 2)
        sys = LinearGaussianSystem(np.eye(4), np.zeros(4), H, np.zeros((4, 4)), R, steps=1)
        prob = DdkfProblem(sys, sd)
        pred = ddkf_predict(prob, prob.initial_state(np.zeros(4), P))
        B = prob.blocks(0)
        K1, K2, _ = ddkf_gains(pred, B.H1, B.H2, B.R)
        K, _ = kf_gain(P[:2, :2], H[:, :2], R)
        np.testing.assert_allclose(K1, K, atol=1e-13)
        assert np.abs(K2).max() <= 1e-15

    @pytest.mark.parametrize("s", [0, 2])
    def test_stacked_gain_equals_full(self, rng, s):
        n = 8
        sys = random_system(rng, n, 3, 1)
        sd = build_space_decomposition(n, 4 + s // 2, s)
        P = random_spd(rng, n)
        prob = DdkfProblem(sys, sd)
        pred = ddkf_predict(prob, prob.initial_state(np.zeros(n), P))
        B = prob.blocks(0)
        K1, K2, _ = ddkf_gains(pred, B.H1, B.H2, B.R)
        _, Pf = kf_predict(GlobalFilterState(np.zeros(n), P), sys)
        K, _ = kf_gain(Pf, sys.observation_ops[0], sys.obs_cov[0])
        assert np.abs(K1 - K[sd.I1.slice]).max() <= 1e-10
        assert np.abs(K2 - K[sd.I2.slice]).max() <= 1e-10


class TestCorrect:
    def test_zero_gain(self, rng):
        sys = random_system(rng, 4, 2, 1)
        sd = build_space_decomposition(4, 2, 0)
        prob = DdkfProblem(sys, sd)
        pred = ddkf_predict(prob, prob.initial_state(rng.normal(size=4), random_spd(rng, 4)))
        B = prob.blocks(0)
        Z = np.zeros((2, 2))
        out = ddkf_correct(pred, Z, Z, B.H1, B.H2, rng.normal(size=2))
        np.testing.assert_array_equal(out.x1, pred.x1)
        np.testing.assert_array_equal(out.x2, pred.x2)
        np.testing.assert_array_equal(out.P1, pred.P1)
        np.testing.assert_array_equal(out.P12, pred.P12)
        assert out.k == 1

    def test_one_step_matches_kf(self, rng):
        sys = random_system(rng, 4, 2, 1, tridiagonal=False)
        sd = build_space_decomposition(4, 2, 0)
        _, _, devs = run_both(sys, sd, rng.normal(size=4), random_spd(rng, 4), [rng.normal(size=2)])
        assert devs[0] <= 1e-12

    def test_overlap_agreement(self, rng):
        sys = random_system(rng, 6, 2, 1)
        sd = build_space_decomposition(6, 4, 2)
        st, _, _ = run_both(sys, sd, rng.normal(size=6), random_spd(rng, 6), [rng.normal(size=2)])
        a = st.x1[sd.I12.shift(sd.I1).slice]
        b = st.x2[sd.I12.shift(sd.I2).slice]
        assert np.abs(a - b).max() <= 1e-10

    def test_observation_length_checked(self, rng):
        sys = random_system(rng, 4, 2, 1)
        prob = DdkfProblem(sys, build_space_decomposition(4, 2, 0))
        with pytest.raises(DimensionError):
            ddkf_step(prob, prob.initial_state(np.zeros(4)), np.zeros(3))


class TestStep:
    def test_identity_system(self, rng):
        n = 4
        sys = LinearGaussianSystem(np.eye(n), np.zeros(n), np.eye(n), np.eye(n), np.eye(n), steps=1)
        sd = build_space_decomposition(n, 2, 0)
        _, _, devs = run_both(sys, sd, np.zeros(n), np.eye(n), [rng.normal(size=n)])
        assert devs[0] <= 1e-15

    @pytest.mark.parametrize("s", [0, 2, 4])
    def test_ten_steps(self, rng, s):
        n = 8
        sys = random_system(rng, n, 3, 10)
        sd = build_space_decomposition(n, 4 + s // 2, s)
        st, g, devs = run_both(sys, sd, rng.normal(size=n), random_spd(rng, n), rng.normal(size=(10, 3)))
        assert max(devs) <= 1e-10
        P = st.assemble_covariance(sd.subsets, n)
        assert np.abs(P - g.P).max() <= 1e-10 * np.abs(g.P).max()
        assert np.abs(st.P21 - st.P12.T).max() <= 1e-10


class TestWindows:
    def setup_case(self, rng, steps=12):
        sys = random_system(rng, 8, 3, steps)
        sd = build_space_decomposition(8, 5, 2)
        return sys, sd, rng.normal(size=8), random_spd(rng, 8), list(rng.normal(size=(steps, 3)))

    def test_single_window_is_flat_loop(self, rng):
        sys, sd, x0, P0, ys = self.setup_case(rng)
        out = run_windows(DdkfProblem(sys, sd), x0, P0, ys)
        prob = DdkfProblem(sys, sd)
        st = prob.initial_state(x0, P0)
        for got, y in zip(out[0], ys):
            st = ddkf_step(prob, st, y)
            np.testing.assert_array_equal(got.x1, st.x1)
            np.testing.assert_array_equal(got.P2, st.P2)

    def test_two_windows_equal_one(self, rng):
        sys, sd, x0, P0, ys = self.setup_case(rng)
        flat = run_windows(DdkfProblem(sys, sd), x0, P0, ys)[0]
        td = build_time_decomposition(11, (7, 6), (1,))
        win = run_windows(DdkfProblem(sys, sd, td=td), x0, P0, ys)
        assert [s.k for s in win[0]] == list(range(1, 8))
        assert [s.k for s in win[1]] == list(range(7, 13))
        for st in win[0] + win[1]:
            ref = flat[st.k - 1]
            np.testing.assert_array_equal(st.x1, ref.x1)
            np.testing.assert_array_equal(st.x2, ref.x2)
            np.testing.assert_array_equal(st.P12, ref.P12)

    def test_window_mismatch(self, rng):
        sys, sd, x0, P0, ys = self.setup_case(rng)
        td = build_time_decomposition(5, (6,))
        with pytest.raises(DimensionError):
            run_windows(DdkfProblem(sys, sd, td=td), x0, P0, ys)


class TestMerge:
    def test_examples(self):
        sd = build_space_decomposition(6, 4, 2)
        out = merge_overlap([9, 9, 1, 3], [3, 1, 7, 7], sd)
        np.testing.assert_array_equal(out, [9, 9, 2, 2, 7, 7])
        same = merge_overlap([0, 0, 5, 6], [5, 6, 0, 0], sd)
        np.testing.assert_array_equal(same[2:4], [5, 6])

    def test_boundary(self):
        sd = build_space_decomposition(4, 2, 0)
        out = merge_overlap([1, 2], [3, 4], sd, boundary=(0, 5))
        np.testing.assert_array_equal(out, [0, 1, 2, 3, 4, 5])

    def test_shape(self):
        with pytest.raises(DimensionError):
            merge_overlap([1, 2, 3], [4], build_space_decomposition(4, 2, 0))

    def test_multi(self):
        md = build_multi_decomposition(6, 2, 2, sizes=(2, 4))
        np.testing.assert_array_equal(merge_multi([np.array([9, 9, 1, 3.0]), np.array([3, 1, 7, 7.0])], md),
                                      [9, 9, 2, 2, 7, 7])


def block_tridiagonal_system(rng, n, md, steps, m=4):
    if md.s:
        # with overlapping subsets a banded M keeps every row inside its neighbours
        M = random_tridiagonal(rng, n)
    else:
        M = np.zeros((n, n))
        I = md.subsets
        for i in range(md.n_sub):
            for j in (i - 1, i, i + 1):
                if 0 <= j < md.n_sub:
                    M[I[i].slice, I[j].slice] = rng.normal(size=(len(I[i]), len(I[j]))) / np.sqrt(n)
    return LinearGaussianSystem(M, rng.normal(size=n), rng.normal(size=(m, n)), random_spd(rng, n, 0.5) / n,
                                random_spd(rng, m, 1.0) / m, steps=steps)


class TestMulti:
    def test_three_decoupled(self, rng):
        md = build_multi_decomposition(9, 3, 0)
        M = np.zeros((9, 9))
        Q = np.zeros((9, 9))
        P0 = np.zeros((9, 9))
        for I in md.subsets:
            M[I.slice, I.slice] = rng.normal(size=(3, 3))
            Q[I.slice, I.slice] = random_spd(rng, 3)
            P0[I.slice, I.slice] = random_spd(rng, 3)
        H = np.zeros((2, 9))
        H[:, :3] = rng.normal(size=(2, 3))
        sys = LinearGaussianSystem(M, np.zeros(9), H, Q, np.eye(2), steps=1)
        prob = MultiDdkfProblem(sys, md)
        x0 = rng.normal(size=9)
        st = multi_ddkf_step(prob, prob.initial_state(x0, P0), rng.normal(size=2))
        for i in (1, 2):
            Ii = md.subsets[i]
            Mi = M[Ii.slice, Ii.slice]
            np.testing.assert_allclose(st.x[i], Mi @ x0[Ii.slice], atol=1e-13)
            np.testing.assert_allclose(st.P[i, i], Mi @ P0[Ii.slice, Ii.slice] @ Mi.T + Q[Ii.slice, Ii.slice],
                                       atol=1e-13)

    @pytest.mark.parametrize("s", [0, 2])
    def test_four_subdomains(self, rng, s):
        md = build_multi_decomposition(16, 4, s)
        sys = block_tridiagonal_system(rng, 16, md, 5)
        prob = MultiDdkfProblem(sys, md)
        x0, P0 = rng.normal(size=16), random_spd(rng, 16)
        st = prob.initial_state(x0, P0)
        g = GlobalFilterState(x0, P0)
        for y in rng.normal(size=(5, 4)):
            st = multi_ddkf_step(prob, st, y)
            g = kf_step(g, sys, y)
            assert max_dev(st, g, md.subsets) <= 1e-10

    def test_two_subdomains_match_dedicated_path(self, rng):
        sys = random_system(rng, 8, 3, 4)
        sd = build_space_decomposition(8, 4, 0)
        x0, P0 = rng.normal(size=8), random_spd(rng, 8)
        a, b = DdkfProblem(sys, sd), MultiDdkfProblem(sys, sd)
        sa, sb = a.initial_state(x0, P0), b.initial_state(x0, P0)
        for y in rng.normal(size=(4, 3)):
            sa = ddkf_step(a, sa, y)
            sb = multi_ddkf_step(b, sb, y)
            for i in range(2):
                assert np.abs(sa.x[i] - sb.x[i]).max() <= 1e-12
            for key in sa.P:
                assert np.abs(sa.P[key] - sb.P[key]).max() <= 1e-12

    def test_workers_bitwise(self, rng):
        md = build_multi_decomposition(16, 4, 2)
        sys = block_tridiagonal_system(rng, 16, md, 3)
        prob = MultiDdkfProblem(sys, md)
        x0, P0 = rng.normal(size=16), random_spd(rng, 16)
        s1 = s2 = prob.initial_state(x0, P0)
        for y in rng.normal(size=(3, 4)):
            s1 = multi_ddkf_step(prob, s1, y)
            s2 = multi_ddkf_step(prob, s2, y, workers=4)
        for i in range(4):
            np.testing.assert_array_equal(s1.x[i], s2.x[i])
        for key in s1.P:
            np.testing.assert_array_equal(s1.P[key], s2.P[key])

    def test_rejects_non_tridiagonal(self, rng):
        md = build_multi_decomposition(16, 4, 0)
        sys = random_system(rng, 16, 2, 1, tridiagonal=False)
        prob = MultiDdkfProblem(sys, md)
        with pytest.raises(DimensionError):
            multi_ddkf_step(prob, prob.initial_state(np.zeros(16)), np.zeros(2))

    def test_local_state_from_global(self, rng):
        md = build_multi_decomposition(8, 2, 2)
        P = random_spd(rng, 8)
        st = LocalFilterState.from_global(rng.normal(size=8), P, md.subsets)
        np.testing.assert_array_equal(st.P[1, 0], st.P[0, 1].T)
        np.testing.assert_array_equal(st.assemble_covariance(md.subsets, 8), P)
