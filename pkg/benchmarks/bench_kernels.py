"""Compiled vs NumPy band kernels.

Times ``A @ X`` and ``X @ A.T`` for a tridiagonal ``A`` against dense ``X``
with both backends, then one full two-subdomain filter run per backend (each
in a fresh interpreter, selected through ``DDKALMAN_PURE_PYTHON``).

Usage: ``python3 benchmarks/bench_kernels.py [--sizes 100 250 500] [--repeats 7]``
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from ddkalman import _bandkernels_py, kernels

E2E = """
import json, time
from ddkalman import kernels
from ddkalman.ddkf import run_windows
from ddkalman.harness import Experiment, ExperimentConfig
exp = Experiment(ExperimentConfig(overlap_s=0))
sd = exp.decomposition()
ys = exp.observations(sd)
prob = exp.problem(sd)
x0, P0 = exp.initial(prob.sys)
run_windows(prob, x0, P0, ys)
ts = []
for _ in range({repeats}):
    t0 = time.perf_counter()
    run_windows(prob, x0, P0, ys)
    ts.append(time.perf_counter() - t0)
ts.sort()
print(json.dumps({{"backend": kernels.BACKEND, "seconds": ts[len(ts) // 2]}}))
"""


def kernel_times(n, repeats):
    rng = np.random.default_rng(0)
    A = np.diag(rng.normal(size=n)) + np.diag(rng.normal(size=n - 1), 1) + np.diag(rng.normal(size=n - 1), -1)
    X = rng.normal(size=(n, n))
    out = {}
    impls = {"python": _bandkernels_py}
    if kernels.BACKEND == "cython":
        impls["cython"] = kernels._impl
    for name, impl in impls.items():
        B = kernels.BandMatrix.from_dense(A, impl=impl)
        left = min(timeit.repeat(lambda: B @ X, number=5, repeat=repeats)) / 5
        right = min(timeit.repeat(lambda: B.rmatmul_t(X), number=5, repeat=repeats)) / 5
        out[name] = (left, right)
    dense = min(timeit.repeat(lambda: A @ X, number=5, repeat=repeats)) / 5
    return out, dense


def end_to_end(pure, repeats):
    env = dict(os.environ)
    if pure:
        env["DDKALMAN_PURE_PYTHON"] = "1"
    else:
        env.pop("DDKALMAN_PURE_PYTHON", None)
    proc = subprocess.run([sys.executable, "-c", E2E.format(repeats=repeats)],
                          capture_output=True, text=True, env=env, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[100, 250, 500])
    p.add_argument("--repeats", type=int, default=7)
    p.add_argument("--skip-e2e", action="store_true", help="only time the kernels")
    args = p.parse_args(argv)

    print(f"active backend: {kernels.BACKEND}")
    print(f"{'n':>5} {'backend':>8} {'A@X [ms]':>10} {'X@A.T [ms]':>11} {'dense A@X [ms]':>15}")
    for n in args.sizes:
        res, dense = kernel_times(n, args.repeats)
        for name, (l, r) in res.items():
            print(f"{n:>5} {name:>8} {1e3 * l:>10.3f} {1e3 * r:>11.3f} {1e3 * dense:>15.3f}")
    if not args.skip_e2e:
        print("\nfull decomposed run, n=500, 52 steps (median):")
        for pure in (False, True):
            r = end_to_end(pure, args.repeats)
            print(f"  {r['backend']:>8}: {r['seconds']:.3f} s")


if __name__ == "__main__":
    main()
