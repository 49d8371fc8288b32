"""Command-line entry point: ``ddkalman <subcommand> --config FILE --out FILE [--seed N]``."""

import argparse
import json
import sys

import numpy as np

from . import harness, kernels
from .errors import DDKFError

SUBCOMMANDS = ("kf", "ddkf", "compare", "sweep-overlap", "sweep-time", "variance-study", "scaleup")


def _meta(cfg, **extra):
    d = {"config": cfg.to_dict(), "backend": kernels.BACKEND}
    d.update(extra)
    return d


def cmd_kf(cfg, out):
    exp = harness.Experiment(cfg)
    sd = exp.decomposition()
    states = exp.run_kf(sd, sparse_transitions=False)
    ks = np.arange(1, exp.steps + 1)
    rmse = harness.rmse_series(exp.truth[ks], [s.x_hat for s in states])
    rows = [(k, exp.times[k], r) for k, r in zip(ks, rmse)]
    harness.write_csv(out, ["step", "time", "rmse_kf"], rows, _meta(cfg))


def cmd_ddkf(cfg, out):
    exp = harness.Experiment(cfg)
    sd = exp.decomposition()
    td = exp.time_decomposition()
    flat = harness.flatten_windows(exp.run_ddkf(sd, td))
    merged = [exp.merge(st, sd) for st in flat]
    ks = np.array([st.k for st in flat])
    rmse = harness.rmse_series(exp.truth[ks], merged)
    rows = []
    for st, k, r in zip(flat, ks, rmse):
        mismatch = 0.0
        for i in range(st.n_sub - 1):
            ov = sd.subsets[i].intersection(sd.subsets[i + 1])
            if len(ov):
                a = st.x[i][ov.shift(sd.subsets[i]).slice]
                b = st.x[i + 1][ov.shift(sd.subsets[i + 1]).slice]
                mismatch = max(mismatch, float(np.max(np.abs(a - b))))
        rows.append((k, exp.times[k], r, mismatch))
    harness.write_csv(out, ["step", "time", "rmse_ddkf", "overlap_mismatch"], rows, _meta(cfg))


def cmd_compare(cfg, out):
    rep = harness.compare(cfg)
    rows = zip(rep.steps, rep.max_abs_dev, rep.rmse_ddkf, rep.rmse_kf)
    harness.write_csv(out, ["step", "max_abs_dev", "rmse_ddkf", "rmse_kf"], rows,
                      _meta(cfg, window_errors=rep.window_errors))


def cmd_sweep_overlap(cfg, out):
    res = harness.error_overlap_sweep(cfg)
    harness.write_csv(out, ["s", "error_s"], sorted(res.items()), _meta(cfg))


def cmd_sweep_time(cfg, out):
    res = harness.error_time_sweep(cfg)
    L = max(len(v) for v in res.values())
    header = ["s12"] + [f"error_window{j + 1}" for j in range(L)]
    harness.write_csv(out, header, [[s12] + errs for s12, errs in sorted(res.items())], _meta(cfg))


def cmd_variance_study(cfg, out):
    res = harness.variance_study(cfg)
    rows = [(name, key, val) for name, d in res.items() for key, val in d.items()]
    harness.write_csv(out, ["scenario", "metric", "value"], rows, _meta(cfg))


def cmd_scaleup(cfg, out):
    res = harness.measure_scaleup(cfg)
    rows = [(k, v) for k, v in res.items()]
    harness.write_csv(out, ["quantity", "value"], rows, _meta(cfg))


COMMANDS = {
    "kf": cmd_kf,
    "ddkf": cmd_ddkf,
    "compare": cmd_compare,
    "sweep-overlap": cmd_sweep_overlap,
    "sweep-time": cmd_sweep_time,
    "variance-study": cmd_variance_study,
    "scaleup": cmd_scaleup,
}


def build_parser():
    p = argparse.ArgumentParser(prog="ddkalman", description="Decomposed Kalman filter experiments.")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--out", required=True, help="output CSV path")
        sp.add_argument("--seed", type=int, default=None, help="override the configured noise seed")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = harness.ExperimentConfig.from_json(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
    except FileNotFoundError:
        print(f"ddkalman: config file not found: {args.config}", file=sys.stderr)
        return 2
    except (DDKFError, TypeError, json.JSONDecodeError) as exc:
        print(f"ddkalman: bad config {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command](cfg, args.out)
    except DDKFError as exc:
        print(f"ddkalman: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
