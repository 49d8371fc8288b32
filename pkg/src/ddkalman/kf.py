"""Classical (undecomposed) linear Kalman filter.

Besides being usable on its own, this filter is the reference against which
the decomposed filter is checked, so it deliberately uses plain dense NumPy
products and shares no arithmetic with :mod:`ddkalman.ddkf`.

Step ``k`` of a run maps time index ``k`` to ``k + 1``: the forecast uses
``M_k``, ``b_k``, ``Q_k`` and the correction uses ``H``, ``R`` and ``y`` of
time ``k + 1`` (stored at list position ``k``).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import DimensionError
from .matrixcore import spd_solve, symmetrize


def _as_operand(v):
    return v.tocsr() if sparse.issparse(v) else np.asarray(v, dtype=float)


def _per_step(value, steps, name):
    if isinstance(value, (list, tuple)):
        if len(value) != steps:
            raise DimensionError(f"{name}: expected {steps} per-step entries, got {len(value)}")
        return [_as_operand(v) for v in value]
    return [_as_operand(value)] * steps


@dataclass
class LinearGaussianSystem:
    """Per-step operators of ``x_{k+1} = M_k x_k + b_k + w_k``, ``y = H x + v``.

    Any operator may be given once (time invariant) or as a list with one
    entry per step. Transition matrices may be SciPy sparse matrices; the
    other operators are dense.
    """

    transitions: list
    controls: list
    observation_ops: list
    model_cov: list
    obs_cov: list
    steps: int = field(default=0)

    def __post_init__(self):
        if not self.steps:
            for v in (self.transitions, self.controls, self.observation_ops, self.model_cov, self.obs_cov):
                if isinstance(v, (list, tuple)):
                    self.steps = len(v)
                    break
            else:
                raise DimensionError("steps must be given when every operator is time invariant")
        s = self.steps
        self.transitions = _per_step(self.transitions, s, "transitions")
        self.controls = _per_step(self.controls, s, "controls")
        self.observation_ops = _per_step(self.observation_ops, s, "observation_ops")
        self.model_cov = _per_step(self.model_cov, s, "model_cov")
        self.obs_cov = _per_step(self.obs_cov, s, "obs_cov")
        n = self.transitions[0].shape[0]
        m = self.observation_ops[0].shape[0]
        for k in range(s):
            if self.transitions[k].shape != (n, n) or self.controls[k].shape != (n,):
                raise DimensionError(f"step {k}: model operators disagree on n={n}")
            if self.observation_ops[k].shape != (m, n):
                raise DimensionError(f"step {k}: observation operator must be {m}x{n}")
            if self.model_cov[k].shape != (n, n) or self.obs_cov[k].shape != (m, m):
                raise DimensionError(f"step {k}: covariance shapes disagree with n={n}, m={m}")

    @property
    def n(self):
        return self.transitions[0].shape[0]

    @property
    def m(self):
        return self.observation_ops[0].shape[0]


@dataclass(frozen=True)
class GlobalFilterState:
    x_hat: np.ndarray
    P: np.ndarray
    k: int = 0


def kf_predict(state, sys):
    """Forecast ``(M x + b, M P M^T + Q)`` for step ``state.k``."""
    k = state.k
    if not 0 <= k < sys.steps:
        raise DimensionError(f"step {k} outside 0..{sys.steps - 1}")
    M = sys.transitions[k]
    if state.x_hat.shape != (M.shape[0],) or state.P.shape != M.shape:
        raise DimensionError("state dimension does not match the transition matrix")
    x_pred = M @ state.x_hat + sys.controls[k]
    if sparse.issparse(M):
        # M (M P^T)^T = M P M^T with a sparse left operand in both products
        MPM = M @ np.asarray(M @ state.P.T).T
    else:
        MPM = M @ state.P @ M.T
    P_pred = symmetrize(MPM + sys.model_cov[k])
    return x_pred, P_pred


def kf_gain(P_pred, H, R):
    """Kalman gain ``K = P H^T S^{-1}`` and innovation covariance ``S``."""
    H = np.asarray(H, dtype=float)
    if H.shape[1] != P_pred.shape[0] or R.shape != (H.shape[0], H.shape[0]):
        raise DimensionError("gain operands have inconsistent shapes")
    PHt = P_pred @ H.T
    S = symmetrize(H @ PHt + R)
    # K S = P H^T  <=>  S K^T = H P  (S symmetric)
    K = spd_solve(S, PHt.T).T
    return K, S


def kf_correct(x_pred, P_pred, K, H, y, k=0):
    """Analysis state at time ``k + 1`` from the forecast and gain."""
    y = np.asarray(y, dtype=float)
    if K.shape != (x_pred.shape[0], H.shape[0]) or y.shape != (H.shape[0],):
        raise DimensionError("correction operands have inconsistent shapes")
    P = symmetrize(P_pred - K @ (H @ P_pred))
    x_hat = x_pred + K @ (y - H @ x_pred)
    return GlobalFilterState(x_hat, P, k + 1)


def kf_step(state, sys, y):
    x_pred, P_pred = kf_predict(state, sys)
    H = sys.observation_ops[state.k]
    K, _ = kf_gain(P_pred, H, sys.obs_cov[state.k])
    return kf_correct(x_pred, P_pred, K, H, y, state.k)


def kf_run(sys, x0, P0, ys, k0=0):
    """Filter ``ys`` from ``(x0, P0)``; returns the analysis states of every step."""
    if len(ys) != sys.steps - k0:
        raise DimensionError(f"expected {sys.steps - k0} observation vectors, got {len(ys)}")
    state = GlobalFilterState(np.asarray(x0, dtype=float), np.asarray(P0, dtype=float), k0)
    out = []
    for y in ys:
        state = kf_step(state, sys, y)
        out.append(state)
    return out
