"""Experiment driver for the shallow-water twin experiments.

A flat JSON file configures an :class:`ExperimentConfig`. :class:`Experiment`
turns it into a filtering problem: a reference model run provides the
transition operators, the truth and (with seeded noise) the observations.
The functions below run the full filter and the decomposed filter on that
problem and reduce the results to the reported metrics.

Error metrics use the max-abs (infinity) norm.
"""

import csv
import dataclasses
import json
import math
import os
import statistics
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from . import kernels
from .ddkf import (
    DdkfProblem,
    MultiDdkfProblem,
    ddkf_correct,
    ddkf_gains,
    ddkf_predict,
    merge_multi,
    merge_overlap,
    multi_ddkf_step,
    run_windows,
)
from .decomp import (
    build_multi_decomposition,
    build_space_decomposition,
    build_time_decomposition,
    two_window_layout,
)
from .errors import ConfigurationError, DimensionError
from .kf import LinearGaussianSystem, kf_run
from .swe import (
    SweGrid,
    build_observation_operator,
    gaussian_correlation,
    observation_owner,
    reference_run,
    synth_observations,
    uniform_positions,
)

NORM = "inf"


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment configuration; field names are the JSON keys."""

    n: int = 500
    domain_length: float = 1.0
    t_final: float = 1.5
    g: float = 9.81
    nt: int = 53
    m_obs: int = 14
    sigma_model_sq: float = 0.5
    sigma_obs_sq: float = 0.35
    noise_scale: float = 1e-2
    noise_scale_sub1: float = None
    noise_scale_sub2: float = None
    seed: int = 0
    n_sub: int = 2
    overlap_s: int = 0
    alpha_split: float = 0.5
    windows: tuple = None
    window_overlap: int = 1
    p0_mode: str = "zero"
    scheme: str = "lax-wendroff"
    truncate_correlation: bool = False
    component: str = "height"
    sweep_values: tuple = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        ints = ("n", "nt", "m_obs", "seed", "n_sub", "overlap_s", "window_overlap")
        for key in ints:
            v = getattr(self, key)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigurationError(f"'{key}' must be an integer, got {v!r}", key=key)
        nums = ("domain_length", "t_final", "g", "sigma_model_sq", "sigma_obs_sq", "noise_scale", "alpha_split")
        for key in nums + ("noise_scale_sub1", "noise_scale_sub2"):
            v = getattr(self, key)
            if v is None and key.startswith("noise_scale_sub"):
                continue
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigurationError(f"'{key}' must be a finite number, got {v!r}", key=key)
        for key in ("sigma_model_sq", "sigma_obs_sq", "noise_scale", "noise_scale_sub1", "noise_scale_sub2"):
            v = getattr(self, key)
            if v is not None and v < 0:
                raise ConfigurationError(f"'{key}' must be non-negative, got {v}", key=key)
        if self.sigma_obs_sq <= 0:
            raise ConfigurationError("'sigma_obs_sq' must be positive (R must be positive definite)", key="sigma_obs_sq")
        for key in ("domain_length", "t_final", "g"):
            if getattr(self, key) <= 0:
                raise ConfigurationError(f"'{key}' must be positive", key=key)
        if self.n < 4:
            raise ConfigurationError("'n' must be at least 4", key="n")
        if self.nt < 2:
            raise ConfigurationError("'nt' must be at least 2", key="nt")
        if not 1 <= self.m_obs <= self.n:
            raise ConfigurationError(f"'m_obs' must lie in 1..n, got {self.m_obs}", key="m_obs")
        if self.n_sub < 2:
            raise ConfigurationError("'n_sub' must be at least 2", key="n_sub")
        if self.overlap_s < 0 or self.overlap_s % 2:
            raise ConfigurationError("'overlap_s' must be a non-negative even integer", key="overlap_s")
        if not 0.0 <= self.alpha_split <= 1.0:
            raise ConfigurationError("'alpha_split' must lie in [0, 1]", key="alpha_split")
        if self.p0_mode not in ("zero", "model"):
            raise ConfigurationError(f"'p0_mode' must be 'zero' or 'model', got {self.p0_mode!r}", key="p0_mode")
        if self.scheme not in ("lax-wendroff", "closed-form"):
            raise ConfigurationError(f"unknown 'scheme' {self.scheme!r}", key="scheme")
        if self.component not in ("height", "momentum"):
            raise ConfigurationError(f"'component' must be 'height' or 'momentum'", key="component")
        if not isinstance(self.truncate_correlation, bool):
            raise ConfigurationError("'truncate_correlation' must be true or false", key="truncate_correlation")
        if self.windows is not None:
            for w in self.windows:
                if len(w) != 2:
                    raise ConfigurationError("each entry of 'windows' needs a size and an overlap", key="windows")

    @classmethod
    def from_dict(cls, data):
        """Build from a parsed JSON object; unknown keys are rejected by name."""
        if not isinstance(data, dict):
            raise ConfigurationError("configuration must be a JSON object", key="<root>")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigurationError(f"unknown configuration key '{key}'", key=key)
        kw = dict(data)
        if kw.get("windows") is not None:
            wins = kw["windows"]
            if not isinstance(wins, list) or not wins:
                raise ConfigurationError("'windows' must be a non-empty list", key="windows")
            parsed = []
            for j, w in enumerate(wins):
                if not isinstance(w, dict) or "size" not in w:
                    raise ConfigurationError(f"windows[{j}] must be an object with 'size' and 'overlap'", key="windows")
                extra = set(w) - {"size", "overlap"}
                if extra:
                    raise ConfigurationError(f"unknown key '{sorted(extra)[0]}' in windows[{j}]", key="windows")
                parsed.append((w["size"], w.get("overlap", 0)))
            kw["windows"] = tuple(parsed)
        if kw.get("sweep_values") is not None:
            kw["sweep_values"] = tuple(kw["sweep_values"])
        return cls(**kw)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: invalid JSON ({exc})", key="<root>") from exc
        return cls.from_dict(data)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        if self.windows is not None:
            d["windows"] = [{"size": a, "overlap": b} for a, b in self.windows]
        if self.sweep_values is not None:
            d["sweep_values"] = list(self.sweep_values)
        return d


@lru_cache(maxsize=8)
def _reference(n, L, g, nt, t_final, scheme):
    return reference_run(SweGrid(n, L, g), nt, t_final=t_final, scheme=scheme)


class Experiment:
    """Filtering problem derived from a configuration.

    The reference run is cached per grid, so sweeps over decompositions reuse it.
    """

    def __init__(self, cfg):
        self.cfg = cfg
        self.grid = SweGrid(cfg.n, cfg.domain_length, cfg.g)
        self.ref = _reference(cfg.n, cfg.domain_length, cfg.g, cfg.nt, cfg.t_final, cfg.scheme)
        self.steps = len(self.ref.dts)
        self.times = np.array([s.t for s in self.ref.states])
        self.positions = uniform_positions(self.grid, cfg.m_obs)
        self.H = build_observation_operator(self.grid, self.positions)
        ops = self.ref.operators
        if cfg.component == "height":
            self.truth = self.ref.heights
            self.transitions = [o.M1 for o in ops]
            self.controls = [o.b1 for o in ops]
        else:
            self.truth = self.ref.momenta
            hs = self.ref.heights
            self.transitions = [o.M2 for o in ops]
            self.controls = [o.b2 - o.M21 @ hs[k] for k, o in enumerate(ops)]
        self._sparse = None
        self.operator_cache = {}

    def decomposition(self, s=None):
        s = self.cfg.overlap_s if s is None else s
        if self.cfg.n_sub == 2:
            return build_space_decomposition(self.cfg.n, self.cfg.n // 2 + s // 2, s)
        return build_multi_decomposition(self.cfg.n, self.cfg.n_sub, s)

    def time_decomposition(self, s12=None):
        r = self.steps - 1
        if s12 is None and self.cfg.windows is not None:
            sizes = [w[0] for w in self.cfg.windows]
            overlaps = [w[1] for w in self.cfg.windows[1:]]
            return build_time_decomposition(r, sizes, overlaps)
        return two_window_layout(r, self.cfg.window_overlap if s12 is None else s12)

    def correlation(self, sd):
        sd2 = sd if hasattr(sd, "I1_tilde") else None
        return gaussian_correlation(self.cfg.n, self.grid.dx, self.cfg.domain_length, sd2,
                                    truncate=self.cfg.truncate_correlation)

    def noise_scales(self, sd):
        cfg = self.cfg
        scales = np.full(cfg.m_obs, cfg.noise_scale)
        if (cfg.noise_scale_sub1 is not None or cfg.noise_scale_sub2 is not None) and hasattr(sd, "I1"):
            owner = observation_owner(self.H, sd)
            if cfg.noise_scale_sub1 is not None:
                scales[owner == 1] = cfg.noise_scale_sub1
            if cfg.noise_scale_sub2 is not None:
                scales[owner == 2] = cfg.noise_scale_sub2
        return scales

    def observations(self, sd):
        return synth_observations(self.truth[1:], self.H, self.noise_scales(sd), self.cfg.seed)

    def system(self, sd, sparse_transitions=False):
        cfg = self.cfg
        Q = cfg.sigma_model_sq * self.correlation(sd)
        R = cfg.sigma_obs_sq * np.eye(cfg.m_obs)
        M = self.transitions
        if sparse_transitions:
            if self._sparse is None:
                self._sparse = [sparse.csr_matrix(A) for A in M]
            M = self._sparse
        return LinearGaussianSystem(M, self.controls, self.H, Q, R, steps=self.steps)

    def initial(self, sys):
        x0 = self.truth[0].copy()
        if self.cfg.p0_mode == "zero":
            return x0, np.zeros((self.cfg.n, self.cfg.n))
        return x0, sys.model_cov[0].copy()

    def run_kf(self, sd, ys=None, sparse_transitions=True):
        """Full-filter analyses at times ``1..steps``."""
        sys = self.system(sd, sparse_transitions)
        ys = self.observations(sd) if ys is None else ys
        x0, P0 = self.initial(sys)
        return kf_run(sys, x0, P0, ys)

    def problem(self, sd, td=None):
        sys = self.system(sd)
        if self.cfg.n_sub == 2:
            return DdkfProblem(sys, sd, td, alpha=self.cfg.alpha_split, operator_cache=self.operator_cache)
        return MultiDdkfProblem(sys, sd, td, alpha=self.cfg.alpha_split)

    def run_ddkf(self, sd, td=None, ys=None):
        """Decomposed-filter analyses, grouped by time window."""
        prob = self.problem(sd, td)
        ys = self.observations(sd) if ys is None else ys
        x0, P0 = self.initial(prob.sys)
        step = None if self.cfg.n_sub == 2 else multi_ddkf_step
        return run_windows(prob, x0, P0, ys, step=step)

    def merge(self, state, sd):
        if self.cfg.n_sub == 2:
            return merge_overlap(state.x1, state.x2, sd)
        return merge_multi(state.x, sd)


def window_errors(kf_states, windows, td, merge):
    """Per-window ``max_k ||x_kf(k) - x_dd(k)||_inf`` over the window's steps."""
    errs = []
    for j, states in enumerate(windows):
        e = 0.0
        for st in states:
            if not td.offsets[j] < st.k <= td.offsets[j] + td.sizes[j]:
                raise DimensionError(f"state at time {st.k} outside window {j}")
            e = max(e, float(np.max(np.abs(merge(st) - kf_states[st.k - 1].x_hat))))
        errs.append(e)
    return errs


def flatten_windows(windows):
    """Latest analysis for every time index (later windows win on overlaps)."""
    out = {}
    for states in windows:
        for st in states:
            out[st.k] = st
    return [out[k] for k in sorted(out)]


def default_overlap_values(cfg):
    if cfg.sweep_values is not None:
        return list(cfg.sweep_values)
    limit = min(200, 2 * ((cfg.n // cfg.n_sub) // 2) - 2)
    return list(range(2, limit + 1, 2))


def default_time_overlap_values(exp):
    if exp.cfg.sweep_values is not None:
        return list(exp.cfg.sweep_values)
    vals = []
    for s12 in range(2, 51):
        try:
            exp.time_decomposition(s12)
        except ConfigurationError:
            continue
        vals.append(s12)
    return vals


def error_overlap_sweep(cfg, s_values=None, exp=None):
    """``error_s``: max over windows and steps of the full vs decomposed deviation, per ``s``."""
    exp = Experiment(cfg) if exp is None else exp
    s_values = default_overlap_values(cfg) if s_values is None else s_values
    td = exp.time_decomposition()
    out = {}
    for s in s_values:
        sd = exp.decomposition(s)
        ys = exp.observations(sd)
        ref = exp.run_kf(sd, ys)
        wins = exp.run_ddkf(sd, td, ys)
        out[s] = max(window_errors(ref, wins, td, lambda st: exp.merge(st, sd)))
    return out


def error_time_sweep(cfg, s12_values=None, exp=None):
    """Per-window errors for each time overlap ``s12`` at the configured ``s``."""
    exp = Experiment(cfg) if exp is None else exp
    s12_values = default_time_overlap_values(exp) if s12_values is None else s12_values
    sd = exp.decomposition()
    ys = exp.observations(sd)
    ref = exp.run_kf(sd, ys)
    out = {}
    for s12 in s12_values:
        td = exp.time_decomposition(s12)
        wins = exp.run_ddkf(sd, td, ys)
        out[s12] = window_errors(ref, wins, td, lambda st: exp.merge(st, sd))
    return out


def rmse_series(truth, estimate):
    """``RMSE_k = sqrt(mean_i (truth_k(i) - estimate_k(i))^2)`` for each ``k``."""
    truth = [np.asarray(t, dtype=float) for t in truth]
    estimate = [np.asarray(e, dtype=float) for e in estimate]
    if len(truth) != len(estimate):
        raise DimensionError(f"{len(truth)} truth vectors vs {len(estimate)} estimates")
    out = []
    for t, e in zip(truth, estimate):
        if t.shape != e.shape:
            raise DimensionError("truth and estimate differ in length")
        out.append(float(np.sqrt(np.mean((t - e) ** 2))))
    return np.array(out)


@dataclass
class ComparisonReport:
    steps: np.ndarray
    times: np.ndarray
    max_abs_dev: np.ndarray
    rmse_ddkf: np.ndarray
    rmse_kf: np.ndarray
    window_errors: list


def compare(cfg, exp=None):
    """Full filter vs decomposed filter on the configured problem."""
    exp = Experiment(cfg) if exp is None else exp
    sd = exp.decomposition()
    td = exp.time_decomposition()
    ys = exp.observations(sd)
    ref = exp.run_kf(sd, ys)
    wins = exp.run_ddkf(sd, td, ys)
    flat = flatten_windows(wins)
    merged = [exp.merge(st, sd) for st in flat]
    ks = np.array([st.k for st in flat])
    dev = np.array([np.max(np.abs(m - ref[k - 1].x_hat)) for m, k in zip(merged, ks)])
    truth = exp.truth[ks]
    return ComparisonReport(
        ks, exp.times[ks], dev,
        rmse_series(truth, merged), rmse_series(truth, [ref[k - 1].x_hat for k in ks]),
        window_errors(ref, wins, td, lambda st: exp.merge(st, sd)))


def ddkf_trace(exp, sd, ys=None):
    """Flat two-subdomain run returning merged forecasts and analyses per step."""
    prob = exp.problem(sd)
    ys = exp.observations(sd) if ys is None else ys
    x0, P0 = exp.initial(prob.sys)
    state = prob.initial_state(x0, P0)
    preds, analyses = [], []
    for k in range(exp.steps):
        pred = ddkf_predict(prob, state)
        B = prob.blocks(k)
        K1, K2, _ = ddkf_gains(pred, B.H1, B.H2, B.R)
        state = ddkf_correct(pred, K1, K2, B.H1, B.H2, ys[k])
        preds.append(merge_overlap(pred.x1, pred.x2, sd))
        analyses.append(merge_overlap(state.x1, state.x2, sd))
    return np.array(preds), np.array(analyses), ys


def variance_study(cfg):
    """Three sensitivity scenarios of the decomposed filter.

    Returns a dict of scenario name to metric dict:

    ``model_only``
        ``sigma_model_sq = 0``: deviation of the estimate from the model run.
    ``small_obs_error``
        ``sigma_obs_sq = 1e-5``: fraction of (step, observation) pairs where
        the analysis is closer to the observation than the forecast.
    ``split_noise``
        noise scales ``1e-15`` and ``2`` on the two subdomains: mean
        observation misfit of the analysis in each subdomain.
    """
    out = {}
    exp = Experiment(cfg.replace(sigma_model_sq=0.0, n_sub=2))
    sd = exp.decomposition()
    _, ana, _ = ddkf_trace(exp, sd)
    out["model_only"] = {"max_dev_from_model": float(np.max(np.abs(ana - exp.truth[1:])))}

    exp = Experiment(cfg.replace(sigma_obs_sq=1e-5, n_sub=2))
    sd = exp.decomposition()
    pred, ana, ys = ddkf_trace(exp, sd)
    Y = np.array(ys)
    closer = np.abs(ana @ exp.H.T - Y) < np.abs(pred @ exp.H.T - Y)
    out["small_obs_error"] = {"fraction_closer": float(np.mean(closer)), "pairs": int(closer.size)}

    exp = Experiment(cfg.replace(noise_scale_sub1=1e-15, noise_scale_sub2=2.0, n_sub=2))
    sd = exp.decomposition()
    _, ana, ys = ddkf_trace(exp, sd)
    misfit = np.abs(ana @ exp.H.T - np.array(ys))
    owner = observation_owner(exp.H, sd)
    out["split_noise"] = {
        "misfit_sub1": float(misfit[:, owner == 1].mean()),
        "misfit_sub2": float(misfit[:, owner == 2].mean()),
    }
    return out


def complexity_coefficients(m, s=0):
    """Cubic operation-count coefficients ``(a, b)`` of the full and local filters.

    ``a[i]`` and ``b[i]`` multiply ``n^i`` and ``r^i``; ``m`` is the number of
    observations and ``s`` the overlap.
    """
    a = (2.0 / 3.0 * m ** 3 + m ** 2 + m, 2.0 * m ** 2 + 2.0 * m + 1.0, 2.0 * m + 3.0, 3.0)
    b = (2.0 / 3.0 * m ** 3 + 5.0 * m ** 2 + m - s, 3.0 * m ** 2 + 10.0 * m + 2.0, 4.0 * m + 6.0, 12.0)
    return a, b


def cubic(coeffs, x):
    c0, c1, c2, c3 = coeffs
    return c3 * x ** 3 + c2 * x ** 2 + c1 * x + c0


def scaleup_alpha(a, b, N_p, n_sub):
    """``alpha = (a3 + a2/N + a1/N^2 + a0/N^3) / (b3 + b2/r + b1/r^2 + b0/r^3)``, ``r = N/n_sub``."""
    r = N_p / n_sub
    num = a[3] + a[2] / N_p + a[1] / N_p ** 2 + a[0] / N_p ** 3
    den = b[3] + b[2] / r + b[1] / r ** 2 + b[0] / r ** 3
    return num / den


def scaleup_factor(t_kf, t_ddkf, n_sub):
    """``Sc = T_KF / (n_sub * T_DDKF)`` with ``T_DDKF`` the time of one local problem."""
    if not (t_kf > 0 and t_ddkf > 0):
        raise ConfigurationError("timings must be positive", key="timings")
    if n_sub < 1:
        raise ConfigurationError("n_sub must be positive", key="n_sub")
    return t_kf / (n_sub * t_ddkf)


def scaleup_report(t_kf, t_ddkf, n_sub, N_p, coeffs=None):
    """Measured ``Sc`` and, given cubic coefficients ``(a, b)``, the model ``alpha`` and ``alpha * n_sub^2``."""
    sc = scaleup_factor(t_kf, t_ddkf, n_sub)
    if coeffs is None:
        return sc, None, None
    alpha = scaleup_alpha(coeffs[0], coeffs[1], N_p, n_sub)
    return sc, alpha, alpha * n_sub ** 2


def median_time(fn, repeats=5, warmup=1):
    """Median wall time of ``fn()`` over ``repeats`` runs after ``warmup`` discarded runs."""
    for _ in range(warmup):
        fn()
    ts = []
    for _ in range(max(repeats, 1)):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return statistics.median(ts)


def measure_scaleup(cfg, repeats=5, s=0):
    """Time the dense full filter and the banded two-subdomain filter.

    Both filters run on prepared operators: the warm-up run builds the
    per-step partitions, so the timings cover filtering only. The local
    problems run one after the other, so the time of one local problem is
    taken as the decomposed total divided by ``n_sub``. The default ``s = 0``
    gives local problems of size exactly ``n / n_sub``.
    """
    exp = Experiment(cfg.replace(n_sub=2, overlap_s=s))
    sd = exp.decomposition()
    ys = exp.observations(sd)
    sys_dense = exp.system(sd)
    x0, P0 = exp.initial(sys_dense)
    prob = DdkfProblem(exp.system(sd), sd, alpha=cfg.alpha_split)

    t_kf = median_time(lambda: kf_run(sys_dense, x0, P0, ys), repeats)
    t_dd_total = median_time(lambda: run_windows(prob, x0, P0, ys), repeats)
    n_sub = 2
    t_local = t_dd_total / n_sub
    a, b = complexity_coefficients(cfg.m_obs, sd.s)
    sc, alpha, sc_model = scaleup_report(t_kf, t_local, n_sub, cfg.n, (a, b))
    return {
        "overlap_s": s,
        "t_kf": t_kf,
        "t_ddkf_total": t_dd_total,
        "t_ddkf_local": t_local,
        "sc_measured": sc,
        "alpha_model": alpha,
        "sc_model": sc_model,
        "backend": kernels.BACKEND,
    }


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows, meta=None):
    """Comma-separated file with a header row, LF endings and 17 significant digits.

    A ``<path>.meta.json`` sidecar records the error norm and ``meta``.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    side = {"norm": NORM}
    if meta:
        side.update(meta)
    with open(os.fspath(path) + ".meta.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(side, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def read_csv(path):
    """Parse a file written by :func:`write_csv` back into header and float rows."""
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, rows
