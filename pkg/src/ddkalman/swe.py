"""One-dimensional shallow-water testbed.

The state lives on ``n_x = n + 2`` nodes ``x_i = i * dx`` (``i = 0..n+1``);
nodes ``1..n`` are the interior unknowns and nodes ``0`` and ``n+1`` are
ghost nodes filled by the boundary rule ``h_0 = h_1``, ``(hv)_0 = -(hv)_1``
(mirrored on the right).

Each step is a one-step Lax-Wendroff update written as frozen-coefficient
tridiagonal matrices, with ``alpha = dt / (2 dx)``::

    h_new  = M1 h + b1
    hv_new = M2 hv + b2 - M21 h

``scheme="lax-wendroff"`` (default) assembles the matrices so that the
product reproduces the Lax-Wendroff stencil exactly. ``scheme="closed-form"`` uses
the closed-form coefficients ``eta, psi, xi, phi, chi`` written for this
testbed; that variant is unstable on the default grid and is kept only for
comparison.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, InstabilityError, StateError

G_STANDARD = 9.81
CFL_FACTOR = 0.8


@dataclass(frozen=True)
class SweGrid:
    n: int = 500
    L_domain: float = 1.0
    g: float = G_STANDARD

    def __post_init__(self):
        if self.n < 2:
            raise ConfigurationError(f"need at least 2 interior points, got n={self.n}", key="n")
        if not self.L_domain > 0:
            raise ConfigurationError("domain_length must be positive", key="domain_length")

    @property
    def n_x(self):
        return self.n + 2

    @property
    def dx(self):
        return self.L_domain / self.n

    @property
    def x(self):
        return np.arange(self.n_x) * self.dx

    @property
    def interior(self):
        return slice(1, self.n + 1)


@dataclass(frozen=True)
class SweState:
    h: np.ndarray
    hv: np.ndarray
    t: float = 0.0

    @property
    def v(self):
        return self.hv / self.h


@dataclass(frozen=True)
class SweOperators:
    M1: np.ndarray
    M21: np.ndarray
    M2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    alpha: float


def apply_boundary(h, hv):
    """Fill the ghost nodes in place: free ``h``, reflective ``v``."""
    h[0], h[-1] = h[1], h[-2]
    hv[0], hv[-1] = -hv[1], -hv[-2]
    return h, hv


def initial_condition(grid):
    x = grid.x
    return SweState(2.0 + np.sin(2.0 * np.pi * x), np.zeros_like(x), 0.0)


def _check_state(state):
    if not (np.all(np.isfinite(state.h)) and np.all(np.isfinite(state.hv))):
        raise InstabilityError(f"non-finite values in state at t={state.t}")
    if np.any(state.h <= 0.0):
        raise StateError(f"water height must stay positive (min {state.h.min():.3g} at t={state.t})")


def wave_speed(state, grid):
    """Largest characteristic speed ``max |v| + sqrt(g h)`` over all nodes."""
    _check_state(state)
    c = np.sqrt(grid.g * state.h)
    v = state.v
    return float(np.max(np.maximum(np.abs(v - c), np.abs(v + c))))


def stable_timestep(state, grid, cfl=CFL_FACTOR):
    """``dt = cfl * dx / S``."""
    return cfl * grid.dx / wave_speed(state, grid)


def _tridiag(sub, diag, sup):
    return np.diag(diag) + np.diag(sup, 1) + np.diag(sub, -1)


def _lw_coefficients(state, dt, grid):
    """Row coefficients of the Lax-Wendroff step on all nodes.

    Returns the (left, centre, right) weights of ``h`` in the height update,
    and of ``hv`` and ``h`` in the momentum update, for interior rows.
    """
    a = dt / (2.0 * grid.dx)
    h, q = state.h, state.hv
    v = q / h
    g = grid.g
    w = v * v + 0.5 * g * h
    chi = 0.5 * g * h
    # midpoint Jacobian of the momentum flux, row 2: [g h - v^2, 2 v]
    hm = 0.5 * (h[:-1] + h[1:])
    vm = 0.5 * (q[:-1] + q[1:]) / hm
    am = g * hm - vm * vm
    bm = 2.0 * vm
    i = np.arange(1, grid.n + 1)
    ap, bp = am[i], bm[i]
    an, bn = am[i - 1], bm[i - 1]
    h_l = a * (2.0 * a * w[i - 1] + v[i - 1])
    h_c = 1.0 - 4.0 * a * a * w[i]
    h_r = a * (2.0 * a * w[i + 1] - v[i + 1])
    # q update in terms of f2_j = v_j q_j + chi_j h_j
    f_l = a * 1.0 + 2.0 * a * a * bn
    f_c = -2.0 * a * a * (bp + bn)
    f_r = -a + 2.0 * a * a * bp
    q_l = 2.0 * a * a * an + f_l * v[i - 1]
    q_c = 1.0 - 2.0 * a * a * (ap + an) + f_c * v[i]
    q_r = 2.0 * a * a * ap + f_r * v[i + 1]
    c_l = f_l * chi[i - 1]
    c_c = f_c * chi[i]
    c_r = f_r * chi[i + 1]
    return a, (h_l, h_c, h_r), (q_l, q_c, q_r), (c_l, c_c, c_r)


def _closed_form_coefficients(state, dt, grid):
    a = dt / (2.0 * grid.dx)
    h, q = state.h, state.hv
    v = q / h
    g = grid.g
    w = v * v + 0.5 * g * h
    eta = 0.5 * a * (v + a * w)
    psi = 1.0 - 4.0 * a * a * w
    xi = 0.5 * a * (a + v)
    phi = np.full_like(h, 1.0 + 4.0 * a * a)
    chi = 0.5 * g * h
    i = np.arange(1, grid.n + 1)
    # super +coef_{i+1}, sub -coef_{i-1}; M21 enters the momentum row with a minus sign
    return (a, (-eta[i - 1], psi[i], eta[i + 1]), (-xi[i - 1], phi[i], xi[i + 1]),
            (chi[i - 1], np.zeros(grid.n), -chi[i + 1]))


def closed_form_coefficients(state, dt, grid):
    """Closed-form ``eta, psi, xi, phi, chi`` on all nodes."""
    a = dt / (2.0 * grid.dx)
    v = state.v
    w = v * v + 0.5 * grid.g * state.h
    return {
        "alpha": a,
        "eta": 0.5 * a * (v + a * w),
        "psi": 1.0 - 4.0 * a * a * w,
        "xi": 0.5 * a * (a + v),
        "phi": np.full_like(state.h, 1.0 + 4.0 * a * a),
        "chi": 0.5 * grid.g * state.h,
    }


def assemble_operators(state, dt, grid, scheme="lax-wendroff"):
    """Tridiagonal step matrices frozen at ``state``.

    Ghost-node contributions go to the first and last entries of ``b1`` and
    ``b2``; ``b2`` holds both the momentum and the height ghost terms, so that
    ``hv_new = M2 hv + b2 - M21 h`` on the interior.
    """
    if scheme == "lax-wendroff":
        a, hc, qc, cc = _lw_coefficients(state, dt, grid)
    elif scheme == "closed-form":
        a, hc, qc, cc = _closed_form_coefficients(state, dt, grid)
    else:
        raise ConfigurationError(f"unknown scheme {scheme!r}", key="scheme")
    n = grid.n
    h, q = state.h, state.hv
    M1 = _tridiag(hc[0][1:], hc[1], hc[2][:-1])
    M2 = _tridiag(qc[0][1:], qc[1], qc[2][:-1])
    M21 = -_tridiag(cc[0][1:], cc[1], cc[2][:-1])
    b1 = np.zeros(n)
    b2 = np.zeros(n)
    b1[0] += hc[0][0] * h[0]
    b1[-1] += hc[2][-1] * h[-1]
    b2[0] += qc[0][0] * q[0] + cc[0][0] * h[0]
    b2[-1] += qc[2][-1] * q[-1] + cc[2][-1] * h[-1]
    return SweOperators(M1, M21, M2, b1, b2, a)


def swe_step(state, grid, dt=None, scheme="lax-wendroff"):
    """Advance one step with the assembled operators, then refill the ghosts.

    Raises
    ------
    InstabilityError
        The new state contains NaN or inf.
    StateError
        The height turns non-positive.
    """
    _check_state(state)
    dt = stable_timestep(state, grid) if dt is None else dt
    ops = assemble_operators(state, dt, grid, scheme)
    sl = grid.interior
    h, q = state.h[sl], state.hv[sl]
    h_new = np.empty(grid.n_x)
    q_new = np.empty(grid.n_x)
    h_new[sl] = ops.M1 @ h + ops.b1
    q_new[sl] = ops.M2 @ q + ops.b2 - ops.M21 @ h
    apply_boundary(h_new, q_new)
    out = SweState(h_new, q_new, state.t + dt)
    _check_state(out)
    return out


def lax_wendroff_flux_step(state, grid, dt):
    """Direct one-step Lax-Wendroff update in conservative flux form.

    Evaluates the nonlinear fluxes and the flux Jacobian at cell midpoints;
    shares no code with :func:`assemble_operators`.
    """
    g = grid.g
    U = np.vstack([state.h, state.hv])

    def flux(u):
        hh, qq = u
        return np.vstack([qq, qq * qq / hh + 0.5 * g * hh * hh])

    F = flux(U)
    Um = 0.5 * (U[:, :-1] + U[:, 1:])
    vm = Um[1] / Um[0]
    dF = F[:, 1:] - F[:, :-1]
    # A(Um) @ dF with A = [[0, 1], [g h - v^2, 2 v]]
    AdF = np.vstack([dF[1], (g * Um[0] - vm * vm) * dF[0] + 2.0 * vm * dF[1]])
    lam = dt / grid.dx
    Unew = U.copy()
    Unew[:, 1:-1] = (U[:, 1:-1] - 0.5 * lam * (F[:, 2:] - F[:, :-2])
                     + 0.5 * lam * lam * (AdF[:, 1:] - AdF[:, :-1]))
    h_new, q_new = Unew[0].copy(), Unew[1].copy()
    apply_boundary(h_new, q_new)
    return SweState(h_new, q_new, state.t + dt)


@dataclass(frozen=True)
class ReferenceRun:
    """Model trajectory with the operators used at every step."""

    grid: SweGrid
    states: tuple
    operators: tuple
    dts: tuple

    @property
    def heights(self):
        return np.array([s.h[self.grid.interior] for s in self.states])

    @property
    def momenta(self):
        return np.array([s.hv[self.grid.interior] for s in self.states])


def reference_run(grid, nt, t_final=None, scheme="lax-wendroff", state0=None):
    """``nt - 1`` steps from the initial condition with ``dt = 0.8 dx / S``.

    ``t_final`` caps the last step so the run never passes it; the run stops
    early only if that cap is reached.
    """
    if nt < 2:
        raise ConfigurationError(f"nt must be at least 2, got {nt}", key="nt")
    state = initial_condition(grid) if state0 is None else state0
    states = [state]
    ops = []
    dts = []
    for _ in range(nt - 1):
        dt = stable_timestep(state, grid)
        if t_final is not None:
            if state.t >= t_final:
                break
            dt = min(dt, t_final - state.t)
        ops.append(assemble_operators(state, dt, grid, scheme))
        state = swe_step(state, grid, dt, scheme)
        states.append(state)
        dts.append(dt)
    return ReferenceRun(grid, tuple(states), tuple(ops), tuple(dts))


def gaussian_correlation(n, dx, L_domain, sd=None, truncate=False):
    """Gaussian correlation ``c_ij = rho^{|i-j|^2}``, ``rho = exp(-dx^2 / (2 L^2))``.

    With a decomposition ``sd`` only the blocks over ``I1 minus I12`` and over
    ``I2`` are filled, giving a block-diagonal matrix. ``truncate=True``
    additionally zeroes entries with ``|i - j| >= n / 2``; that cut-off can
    make the matrix indefinite.
    """
    idx = np.arange(n)
    d2 = (idx[:, None] - idx[None, :]) ** 2
    C = np.exp(-d2 * dx * dx / (2.0 * L_domain * L_domain))
    if truncate:
        C[d2 >= (n / 2.0) ** 2] = 0.0
    if sd is None:
        return C
    if sd.n != n:
        raise DimensionError(f"decomposition has n={sd.n}, expected {n}")
    mask = np.zeros((n, n), dtype=bool)
    for I in (sd.I1_tilde, sd.I2):
        mask[I.slice, I.slice] = True
    return np.where(mask, C, 0.0)


def uniform_positions(grid, m):
    """``m`` equally spaced points strictly between the first and last interior nodes."""
    x = grid.x
    return np.linspace(x[1], x[grid.n], m + 2)[1:-1]


def build_observation_operator(grid, positions):
    """Piecewise-linear interpolation from the interior nodes to ``positions``.

    Raises
    ------
    ConfigurationError
        A position lies outside ``[x_1, x_n]``.
    """
    positions = np.atleast_1d(np.asarray(positions, dtype=float))
    dx = grid.dx
    lo, hi = dx, grid.n * dx
    tol = 1e-12 * grid.L_domain
    H = np.zeros((positions.size, grid.n))
    for r, p in enumerate(positions):
        if p < lo - tol or p > hi + tol:
            raise ConfigurationError(f"observation position {p} outside [{lo}, {hi}]", key="obs_positions")
        u = (p - lo) / dx
        j = int(np.floor(u))
        theta = u - j
        if abs(theta - 1.0) < 1e-12:
            j, theta = j + 1, 0.0
        if j >= grid.n - 1:
            j, theta = grid.n - 1, 0.0
        if theta < 1e-12:
            H[r, j] = 1.0
        else:
            H[r, j] = 1.0 - theta
            H[r, j + 1] = theta
    return H


def synth_observations(heights, H, noise_scale=1e-2, seed=0):
    """``y_k = H_k h_k + noise_scale * N(0, 1)``.

    Parameters
    ----------
    heights : sequence of ndarray
        Interior heights at the observed times.
    H : ndarray or sequence of ndarray
        One operator for all times or one per time.
    noise_scale : float or ndarray
        Scalar, or one scale per observation.
    seed : int
    """
    heights = list(heights)
    Hs = H if isinstance(H, (list, tuple)) else [H] * len(heights)
    if len(Hs) != len(heights):
        raise DimensionError(f"{len(Hs)} operators for {len(heights)} states")
    rng = np.random.default_rng(seed)
    out = []
    for Hk, hk in zip(Hs, heights):
        noise = rng.standard_normal(Hk.shape[0])
        out.append(Hk @ hk + np.asarray(noise_scale) * noise)
    return out


def observation_owner(H, sd):
    """Subdomain (1 or 2) of each observation, from its leftmost grid column."""
    first = np.argmax(H != 0.0, axis=1) + 1
    return np.where(first <= sd.n1 - sd.s // 2, 1, 2)
