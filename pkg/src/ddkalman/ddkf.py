"""Domain-decomposed Kalman filter.

Each subdomain ``i`` keeps its own estimate ``x_i`` and covariance ``P_i``
together with the cross-covariances ``P_{i,j}`` to the other subdomains.
With those cross terms the local predictor and corrector reproduce the
undecomposed filter exactly; :mod:`ddkalman.kf` is the reference.

Two code paths exist. :func:`ddkf_step` writes out the two-subdomain
formulas term by term; :func:`multi_ddkf_step` is the neighbour-sum form for
any number of subdomains coupled by a block-tridiagonal model.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .decomp import (
    BlockModel,
    as_multi,
    partition_model_matrix,
    partition_model_multi,
    partition_observation_matrix,
    partition_observation_multi,
)
from .errors import DimensionError, StateError
from .matrixcore import restrict_block, restrict_vec, spd_solve, symmetrize

mm = kernels.matmul
mt = kernels.matmul_t


@dataclass(frozen=True)
class LocalFilterState:
    """Per-subdomain estimates and covariance blocks at time ``k``.

    ``P[i, j]`` is the covariance block between subdomains ``i`` and ``j``
    (0-based); ``P[i, i]`` is the local covariance ``P_i``.
    """

    x: tuple
    P: dict
    k: int = 0

    @property
    def x1(self):
        return self.x[0]

    @property
    def x2(self):
        return self.x[1]

    @property
    def P1(self):
        return self.P[0, 0]

    @property
    def P2(self):
        return self.P[1, 1]

    @property
    def P12(self):
        return self.P[0, 1]

    @property
    def P21(self):
        return self.P[1, 0]

    @property
    def n_sub(self):
        return len(self.x)

    @classmethod
    def from_global(cls, x, P, subsets, k=0):
        """Restrict a global ``(x, P)`` onto the subdomains."""
        x = np.asarray(x, dtype=float)
        P = np.asarray(P, dtype=float)
        xs = tuple(restrict_vec(x, I) for I in subsets)
        blocks = {(i, j): restrict_block(P, Ii, Ij) for i, Ii in enumerate(subsets) for j, Ij in enumerate(subsets)}
        return cls(xs, blocks, k)

    def assemble_covariance(self, subsets, n):
        """Global covariance from the blocks (overlap entries written last-wins)."""
        P = np.zeros((n, n))
        for (i, j), blk in self.P.items():
            P[subsets[i].slice, subsets[j].slice] = blk
        return P


@dataclass(frozen=True)
class Predicted:
    """Forecast of a two-subdomain step."""

    x1: np.ndarray
    x2: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    P12: np.ndarray
    P21: np.ndarray
    k: int


@dataclass(frozen=True)
class StepBlocks:
    M1: object
    M12: object
    M21: object
    M2: object
    b1: np.ndarray
    b2: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    Q1: np.ndarray
    Q12: np.ndarray
    Q2: np.ndarray
    R: np.ndarray


class DdkfProblem:
    """Two-subdomain problem built from a :class:`~ddkalman.kf.LinearGaussianSystem`.

    Per-step partitions are computed on first use and cached. Transition
    blocks are stored through :func:`ddkalman.kernels.as_operator`, so banded
    blocks use the band kernels.

    Parameters
    ----------
    sys : LinearGaussianSystem
    sd : SpaceDecomposition
    td : TimeDecomposition, optional
        Windows for :func:`run_windows`; one window over all steps by default.
    alpha : float
        Weight of subdomain 1 on the overlap columns of ``H``.
    banded : bool
        Set to False to keep every block dense.
    operator_cache : dict, optional
        Shared store for the banded form of each transition matrix, so that
        several problems over the same model convert it only once.
    """

    def __init__(self, sys, sd, td=None, alpha=0.5, banded=True, operator_cache=None):
        if sys.n != sd.n:
            raise DimensionError(f"system has n={sys.n}, decomposition has n={sd.n}")
        self.sys = sys
        self.sd = sd
        self.td = td
        self.alpha = alpha
        self.banded = banded
        self._cache = {}
        self._shared = {}
        self._ops = {} if operator_cache is None else operator_cache

    @property
    def subsets(self):
        return (self.sd.I1, self.sd.I2)

    def _op(self, A):
        return kernels.as_operator(A) if self.banded else A

    def _memo(self, tag, obj, fn):
        key = (tag, id(obj))
        hit = self._shared.get(key)
        if hit is None or hit[0] is not obj:
            hit = (obj, fn(obj))
            self._shared[key] = hit
        return hit[1]

    def _partition(self, M):
        sd = self.sd
        A = M
        if self.banded:
            hit = self._ops.get(id(M))
            if hit is None or hit[0] is not M:
                hit = (M, kernels.as_operator(M))
                self._ops[id(M)] = hit
            A = hit[1]
        if not isinstance(A, kernels.BandMatrix):
            bm = partition_model_matrix(M, sd)
            return BlockModel(self._op(bm.M1), self._op(bm.M12), self._op(bm.M21), self._op(bm.M2))
        # slice the band storage directly; overlap columns of the coupling blocks are zeroed
        s1, s2 = sd.I1.slice, sd.I2.slice
        return BlockModel(
            A.block(s1, s1), A.block(s1, s2, zero_cols=slice(0, sd.s)),
            A.block(s2, s1, zero_cols=slice(sd.n1 - sd.s, sd.n1)), A.block(s2, s2))

    def blocks(self, k):
        blk = self._cache.get(k)
        if blk is not None:
            return blk
        sd, sys = self.sd, self.sys
        bm = self._memo("M", sys.transitions[k], self._partition)
        H1, H2 = self._memo("H", sys.observation_ops[k], lambda H: partition_observation_matrix(H, sd, self.alpha))
        Q1, Q12, Q2 = self._memo("Q", sys.model_cov[k], lambda Q: (
            restrict_block(Q, sd.I1, sd.I1), restrict_block(Q, sd.I1, sd.I2), restrict_block(Q, sd.I2, sd.I2)))
        b = sys.controls[k]
        blk = StepBlocks(
            bm.M1, bm.M12, bm.M21, bm.M2,
            restrict_vec(b, sd.I1), restrict_vec(b, sd.I2), H1, H2, Q1, Q12, Q2, sys.obs_cov[k])
        self._cache[k] = blk
        return blk

    def initial_state(self, x0, P0=None):
        P0 = np.zeros((self.sd.n, self.sd.n)) if P0 is None else P0
        return LocalFilterState.from_global(x0, P0, self.subsets)


def coupling_vectors(bm, x1, x2, sd=None):
    """Boundary terms ``b1k = M12 x2`` and ``b2k = M21 x1``.

    The zero overlap columns of ``M12``/``M21`` make these equal to the
    products of the coupling sub-blocks with the far-side entries only.
    """
    return mm(bm.M12, x2), mm(bm.M21, x1)


def ddkf_predict(prob, state):
    """Local forecasts of both subdomains for step ``state.k``."""
    k = state.k
    if not 0 <= k < prob.sys.steps:
        raise StateError(f"step {k} outside 0..{prob.sys.steps - 1}")
    B = prob.blocks(k)
    P1, P2, P12, P21 = state.P1, state.P2, state.P12, state.P21
    b1k, b2k = coupling_vectors(B, state.x1, state.x2)
    x1 = mm(B.M1, state.x1) + B.b1 + b1k
    x2 = mm(B.M2, state.x2) + B.b2 + b2k

    M1P1 = mm(B.M1, P1)
    M1P12 = mm(B.M1, P12)
    M12P21 = mm(B.M12, P21)
    M12P2 = mm(B.M12, P2)
    M2P2 = mm(B.M2, P2)
    M2P21 = mm(B.M2, P21)
    M21P12 = mm(B.M21, P12)
    M21P1 = mm(B.M21, P1)

    # cross-covariance coupling
    C = mt(M1P1, B.M21) + mt(M12P21, B.M21) + mt(M12P2, B.M2)
    C21 = mt(M2P2, B.M12) + mt(M21P12, B.M12) + mt(M21P1, B.M1)
    # influence of the neighbour on the local covariance
    P_om12 = mt(M12P21, B.M1) + mt(M1P12, B.M12) + mt(M12P2, B.M12)
    P_om21 = mt(M21P12, B.M2) + mt(M2P21, B.M21) + mt(M21P1, B.M21)

    new12 = mt(M1P12, B.M2) + C + B.Q12
    new21 = mt(M2P21, B.M1) + C21 + B.Q12.T
    new12 = 0.5 * (new12 + new21.T)
    P1n = symmetrize(mt(M1P1, B.M1) + P_om12 + B.Q1)
    P2n = symmetrize(mt(M2P2, B.M2) + P_om21 + B.Q2)
    return Predicted(x1, x2, P1n, P2n, new12, new12.T.copy(), k)


def ddkf_gains(pred, H1, H2, R):
    """Gains ``K1, K2`` and the innovation matrix ``F``.

    Raises
    ------
    NotPositiveDefiniteError
        ``F`` is not positive definite.
    """
    H1P12 = H1 @ pred.P12
    R12 = H2 @ pred.P21 @ H1.T + H1P12 @ H2.T
    F = symmetrize(H1 @ pred.P1 @ H1.T + H2 @ pred.P2 @ H2.T + R12 + R)
    G1 = pred.P1 @ H1.T + pred.P12 @ H2.T
    G2 = pred.P2 @ H2.T + pred.P21 @ H1.T
    K1 = spd_solve(F, G1.T).T
    K2 = spd_solve(F, G2.T).T
    return K1, K2, F


def ddkf_correct(pred, K1, K2, H1, H2, y):
    """Analysis from a forecast; every right-hand side uses the forecast blocks."""
    y = np.asarray(y, dtype=float)
    if y.shape != (H1.shape[0],):
        raise DimensionError(f"observation vector must have length {H1.shape[0]}")
    D1 = H1 @ pred.P1 + H2 @ pred.P21
    D2 = H1 @ pred.P12 + H2 @ pred.P2
    P1 = symmetrize(pred.P1 - K1 @ D1)
    P2 = symmetrize(pred.P2 - K2 @ D2)
    P12 = pred.P12 - K1 @ D2
    P21 = pred.P21 - K2 @ D1
    P12 = 0.5 * (P12 + P21.T)
    innov = y - H1 @ pred.x1 - H2 @ pred.x2
    x1 = pred.x1 + K1 @ innov
    x2 = pred.x2 + K2 @ innov
    blocks = {(0, 0): P1, (0, 1): P12, (1, 0): P12.T.copy(), (1, 1): P2}
    return LocalFilterState((x1, x2), blocks, pred.k + 1)


def ddkf_step(prob, state, y):
    pred = ddkf_predict(prob, state)
    B = prob.blocks(state.k)
    K1, K2, _ = ddkf_gains(pred, B.H1, B.H2, B.R)
    return ddkf_correct(pred, K1, K2, B.H1, B.H2, y)


def run_windows(prob, x0, P0, ys, step=None):
    """Filter window by window.

    Window ``j`` restarts from the analysis state its predecessor produced at
    the window's first time index, so overlapping steps are recomputed.

    Parameters
    ----------
    prob : DdkfProblem or MultiDdkfProblem
    x0, P0 : global initial estimate and covariance, or a ready
        :class:`LocalFilterState` passed as ``x0`` with ``P0=None``.
    ys : sequence of ndarray
        ``ys[k]`` is the observation used by step ``k``.
    step : callable, optional
        ``step(prob, state, y)``; :func:`ddkf_step` by default.

    Returns
    -------
    list of list of LocalFilterState
        Analysis states of each window, in step order.
    """
    from .decomp import build_time_decomposition

    step = ddkf_step if step is None else step
    td = prob.td or build_time_decomposition(prob.sys.steps - 1, (prob.sys.steps,))
    if td.offsets[-1] + td.sizes[-1] != prob.sys.steps:
        raise DimensionError(f"time decomposition covers {td.r + 1} steps, system has {prob.sys.steps}")
    if len(ys) != prob.sys.steps:
        raise DimensionError(f"expected {prob.sys.steps} observation vectors, got {len(ys)}")
    start = x0 if isinstance(x0, LocalFilterState) else prob.initial_state(x0, P0)
    history = {start.k: start}
    out = []
    for j in range(td.L):
        t0 = td.offsets[j]
        if t0 not in history:
            raise StateError(f"window {j} starts at {t0}, which the previous window never reached")
        state = history[t0]
        states = []
        seen = {t0: state}
        for k in td.window_steps(j):
            state = step(prob, state, ys[k])
            states.append(state)
            seen[state.k] = state
        history = seen
        out.append(states)
    return out


def merge_overlap(x1, x2, sd, boundary=None):
    """Global vector from two local estimates, averaging on the overlap.

    ``boundary`` is an optional ``(left, right)`` pair prepended and appended
    to the result (physical boundary nodes).
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != (sd.n1,) or x2.shape != (sd.n2,):
        raise DimensionError("local estimates do not match the decomposition")
    out = np.empty(sd.n)
    out[sd.I1.slice] = x1
    out[sd.I2_tilde.slice] = x2[sd.I2_tilde.shift(sd.I2).slice]
    if sd.s:
        a = x1[sd.I12.shift(sd.I1).slice]
        b = x2[sd.I12.shift(sd.I2).slice]
        out[sd.I12.slice] = 0.5 * (a + b)
    if boundary is not None:
        out = np.concatenate(([boundary[0]], out, [boundary[1]]))
    return out


def merge_multi(xs, md):
    """Global vector from ``n_sub`` local estimates, averaging each overlap."""
    total = np.zeros(md.n)
    count = np.zeros(md.n)
    for x, I in zip(xs, md.subsets):
        total[I.slice] += x
        count[I.slice] += 1.0
    return total / count


class MultiDdkfProblem:
    """``n_sub``-subdomain problem for a block-tridiagonal model.

    Accepts a :class:`~ddkalman.decomp.MultiDecomposition` or a two-subdomain
    :class:`~ddkalman.decomp.SpaceDecomposition`.
    """

    def __init__(self, sys, md, td=None, alpha=0.5, banded=True):
        md = as_multi(md)
        if sys.n != md.n:
            raise DimensionError(f"system has n={sys.n}, decomposition has n={md.n}")
        self.sys = sys
        self.md = md
        self.td = td
        self.alpha = alpha
        self.banded = banded
        self._cache = {}

    @property
    def subsets(self):
        return self.md.subsets

    def neighbours(self, i):
        return [j for j in (i - 1, i, i + 1) if 0 <= j < self.md.n_sub]

    def blocks(self, k):
        blk = self._cache.get(k)
        if blk is not None:
            return blk
        md, sys = self.md, self.sys
        op = kernels.as_operator if self.banded else (lambda A: A)
        Mb = {key: op(v) for key, v in partition_model_multi(sys.transitions[k], md).items()}
        Hs = partition_observation_multi(sys.observation_ops[k], md, self.alpha)
        Q = sys.model_cov[k]
        Qb = {(i, j): restrict_block(Q, Ii, Ij) for i, Ii in enumerate(md.subsets) for j, Ij in enumerate(md.subsets)}
        bs = [restrict_vec(sys.controls[k], I) for I in md.subsets]
        blk = (Mb, Hs, Qb, bs, sys.obs_cov[k])
        self._cache[k] = blk
        return blk

    def initial_state(self, x0, P0=None):
        P0 = np.zeros((self.md.n, self.md.n)) if P0 is None else P0
        return LocalFilterState.from_global(x0, P0, self.subsets)


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def multi_ddkf_step(prob, state, y, workers=None):
    """One predict/correct step of the ``n_sub``-subdomain filter.

    Each phase reads only the snapshot produced by the previous phase, so
    running the per-subdomain work on ``workers`` threads gives the same
    result bit for bit as the sequential loop.
    """
    k = state.k
    if not 0 <= k < prob.sys.steps:
        raise StateError(f"step {k} outside 0..{prob.sys.steps - 1}")
    Mb, Hs, Qb, bs, R = prob.blocks(k)
    p = prob.md.n_sub
    nb = prob.neighbours
    y = np.asarray(y, dtype=float)
    P = state.P
    xs = state.x

    # phase 1: forecast; row i of every block depends only on the snapshot
    def forecast(i):
        x = bs[i].copy()
        for a in nb(i):
            x = x + mm(Mb[i, a], xs[a])
        # T[b] = sum_a M_{i,a} P_{a,b}
        T = [sum(mm(Mb[i, a], P[a, b]) for a in nb(i)) for b in range(p)]
        row = {}
        for h in range(p):
            acc = Qb[i, h].copy()
            for b in nb(h):
                acc = acc + mt(T[b], Mb[h, b])
            row[h] = acc
        return x, row

    res = _map(forecast, range(p), workers)
    xp = [r[0] for r in res]
    Pp = {}
    for i in range(p):
        for h in range(p):
            Pp[i, h] = res[i][1][h]
    for i in range(p):
        Pp[i, i] = symmetrize(Pp[i, i])
        for h in range(i + 1, p):
            avg = 0.5 * (Pp[i, h] + Pp[h, i].T)
            Pp[i, h] = avg
            Pp[h, i] = avg.T.copy()

    # phase 2: innovation matrix and gains
    D = {h: sum(Hs[j] @ Pp[j, h] for j in range(p)) for h in range(p)}
    F = symmetrize(sum(D[h] @ Hs[h].T for h in range(p)) + R)
    innov = y - sum(Hs[j] @ xp[j] for j in range(p))

    def gain(i):
        G = sum(Pp[i, j] @ Hs[j].T for j in range(p))
        return spd_solve(F, G.T).T

    K = _map(gain, range(p), workers)

    # phase 3: simultaneous updates from the forecast snapshot
    def update(i):
        row = {h: Pp[i, h] - K[i] @ D[h] for h in range(p)}
        return xp[i] + K[i] @ innov, row

    res = _map(update, range(p), workers)
    blocks = {}
    for i in range(p):
        for h in range(p):
            blocks[i, h] = res[i][1][h]
    for i in range(p):
        blocks[i, i] = symmetrize(blocks[i, i])
        for h in range(i + 1, p):
            avg = 0.5 * (blocks[i, h] + blocks[h, i].T)
            blocks[i, h] = avg
            blocks[h, i] = avg.T.copy()
    return LocalFilterState(tuple(r[0] for r in res), blocks, k + 1)
