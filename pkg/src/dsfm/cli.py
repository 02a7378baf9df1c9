"""Command-line driver: simulate, fit, eval, export-heatmap.

Exit codes: 0 on success (fit: converged), 2 when fit stops at max_iter,
1 on any error.  All outputs are plain CSV / key-value text so downstream
plotting can consume them directly.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io as dio
from .engine import InitStrategy, fit
from .model import ModelConfig, validate_config
from .simeval import (SimScenario, avg_active_per_series, count_active_factors,
                      rmse, simulate)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITER = 2


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1, keeping 2 reserved for the max-iter contract
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit_(f"{self.prog}: error: {message}")


class SystemExit_(Exception):
    pass


def _parse_init(spec: str) -> InitStrategy:
    parts = spec.split(":")
    kind = parts[0]
    if kind == "zeros":
        return InitStrategy(kind="zeros")
    if kind == "svd":
        window = int(parts[1]) if len(parts) > 1 else 100
        threshold = float(parts[2]) if len(parts) > 2 else 0.0
        return InitStrategy(kind="svd_threshold", window=window, threshold=threshold)
    if kind == "warm":
        if len(parts) < 2:
            raise ValueError("warm start needs a path: warm:<file>")
        return InitStrategy(kind="warm_start_path", path=":".join(parts[1:]))
    raise ValueError(f"unknown init strategy {spec!r}")


def _write_manifest(path: str, entries: dict) -> None:
    stamp = os.environ.get("SOURCE_DATE_EPOCH")
    if stamp is not None:
        entries = {**entries, "created_unix": stamp}
    dio.write_kv(path, entries)


def cmd_simulate(args) -> int:
    kv = dio.read_kv(args.scenario)
    sc = SimScenario.from_kv(kv)
    if args.seed is not None:
        sc.seed = args.seed
    out = simulate(sc)
    os.makedirs(args.out, exist_ok=True)
    dio.write_panel(os.path.join(args.out, "panel.csv"), out.panel)
    dio.write_loadings(os.path.join(args.out, "truth_loadings.csv"), out.true_loadings)
    np.savetxt(os.path.join(args.out, "truth_factors.csv"), out.true_factors,
               delimiter=",", fmt="%.17g")
    dio.write_series(os.path.join(args.out, "series.csv"), out.panel.series_names)
    dio.write_kv(os.path.join(args.out, "scenario.cfg"), sc.to_kv())
    _write_manifest(os.path.join(args.out, "manifest.txt"), {
        "kind": "simulate",
        "seed": sc.seed,
        "config_hash": dio.config_hash(sc.to_kv()),
        "p": sc.p, "k_candidate": sc.k_candidate,
        "t_total": sc.t_total, "train_len": sc.train_len,
    })
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = validate_config(ModelConfig.from_kv(dio.read_kv(args.config)))
    panel = dio.load_panel(args.panel, groups_path=args.groups)
    if args.standardize:
        panel = dio.standardize(panel)
    init = _parse_init(args.init)
    result = fit(panel, cfg, init)

    os.makedirs(args.out, exist_ok=True)
    bundle = dio.ExportBundle(args.out)
    dio.write_loadings(bundle.loadings_file, result.loadings)
    dio.write_volatility(bundle.volatility_file, result.volatility, panel.series_names)
    dio.write_moments(bundle.moments_file, result.moments)
    dio.write_series(bundle.series_file, panel.series_names, panel.group_labels)
    dio.write_kv(bundle.config_file, cfg.to_kv())

    fac = result.factor_betas()
    with open(bundle.metrics_file, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,active_factors,avg_active_per_series\n")
        for t in range(1, panel.n_times + 1):
            fh.write(f"{t},{count_active_factors(fac[t])},"
                     f"{avg_active_per_series(fac[t])!r}\n")

    _write_manifest(bundle.manifest_file, {
        "kind": "fit",
        "config_hash": dio.config_hash(cfg.to_kv()),
        "seed": cfg.seed,
        "iterations_run": result.iterations_run,
        "converged": result.converged,
        "intercept_col": "" if result.intercept_col is None else result.intercept_col,
        "standardized": bool(args.standardize),
        "sd_divisor": "T-1",
        "init": args.init,
    })
    return EXIT_OK if result.converged else EXIT_MAX_ITER


def _segments(t_len: int, break_times) -> list:
    cuts = sorted({when for (when, _, _) in break_times if 1 < when <= t_len})
    starts = [1] + cuts
    stops = cuts + [t_len + 1]
    return [(a, b - 1) for a, b in zip(starts, stops) if a <= b - 1]


def cmd_eval(args) -> int:
    truth = dio.read_loadings(os.path.join(args.truth, "truth_loadings.csv"))
    est = dio.read_loadings(os.path.join(args.fit, "loadings.csv"))
    manifest = dio.read_kv(os.path.join(args.fit, "manifest.txt"))
    icol = manifest.get("intercept_col", "")
    est_b = est.betas
    if icol not in ("", None):
        keep = [k for k in range(est_b.shape[2]) if k != int(icol)]
        est_b = est_b[:, :, keep]
    if truth.betas.shape[1] != est_b.shape[1]:
        raise ValueError("series dimension mismatch between truth and fit")
    if truth.betas.shape[0] != est_b.shape[0]:
        raise ValueError("time dimension mismatch between truth and fit")
    if truth.betas.shape[2] != est_b.shape[2]:
        raise ValueError("factor dimension mismatch between truth and fit")
    t_len = truth.betas.shape[0] - 1

    rmses = np.zeros(t_len)
    k_est = np.zeros(t_len, dtype=int)
    k_true = np.zeros(t_len, dtype=int)
    avg_act = np.zeros(t_len)
    for t in range(1, t_len + 1):
        rmses[t - 1] = rmse(truth.betas[t], est_b[t], threshold=args.threshold)
        k_est[t - 1] = count_active_factors(est_b[t], threshold=args.threshold)
        k_true[t - 1] = count_active_factors(truth.betas[t], threshold=args.threshold)
        avg_act[t - 1] = avg_active_per_series(est_b[t], threshold=args.threshold)

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,rmse,k_est,k_true,avg_active_per_series\n")
        for t in range(t_len):
            fh.write(f"{t + 1},{rmses[t]!r},{k_est[t]},{k_true[t]},{avg_act[t]!r}\n")

    scenario_path = os.path.join(args.truth, "scenario.cfg")
    breaks = []
    if os.path.exists(scenario_path):
        sc = SimScenario.from_kv(dio.read_kv(scenario_path))
        breaks = [(w + sc.train_len, k, a) for (w, k, a) in sc.break_times]
    seg_path = os.path.splitext(args.out)[0] + "_segments.csv"
    with open(seg_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("segment,t_start,t_end,rmse,pct,k_hat,k_true\n")
        for i, (a, b) in enumerate(_segments(t_len, breaks), 1):
            sl = slice(a - 1, b)
            fh.write(f"{i},{a},{b},{np.mean(rmses[sl])!r},-,"
                     f"{np.mean(k_est[sl])!r},{np.mean(k_true[sl])!r}\n")
    return EXIT_OK


def cmd_export_heatmap(args) -> int:
    est = dio.read_loadings(os.path.join(args.fit, "loadings.csv"))
    t_len = est.betas.shape[0] - 1
    if not 1 <= args.time <= t_len:
        raise ValueError(f"time index {args.time} outside 1..{t_len}")
    names_path = os.path.join(args.fit, "series.csv")
    if os.path.exists(names_path):
        names, _ = dio.read_series(names_path)
    else:
        names = [f"S{j + 1:03d}" for j in range(est.betas.shape[1])]
    b = np.minimum(np.abs(est.betas[args.time]), args.cap)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("series," + ",".join(f"F{k + 1}" for k in range(b.shape[1])) + "\n")
        for j, name in enumerate(names):
            fh.write(name + "," + ",".join(repr(float(v)) for v in b[j]) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsfm",
                     description="Dynamic sparse factor model estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic benchmark")
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="estimate the model on a panel CSV")
    p_fit.add_argument("--panel", required=True)
    p_fit.add_argument("--config", required=True)
    p_fit.add_argument("--groups", default=None)
    p_fit.add_argument("--init", default="zeros",
                       help="zeros | svd:<window>:<threshold> | warm:<path>")
    p_fit.add_argument("--standardize", action="store_true")
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_eval = sub.add_parser("eval", help="score a fit against simulation truth")
    p_eval.add_argument("--truth", required=True)
    p_eval.add_argument("--fit", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--threshold", type=float, default=0.1)
    p_eval.set_defaults(func=cmd_eval)

    p_hm = sub.add_parser("export-heatmap", help="absolute loadings at one time")
    p_hm.add_argument("--fit", required=True)
    p_hm.add_argument("--time", type=int, required=True)
    p_hm.add_argument("--out", required=True)
    p_hm.add_argument("--cap", type=float, default=0.5)
    p_hm.set_defaults(func=cmd_export_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit_ as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except SystemExit:
        raise
    except Exception as exc:
        print(f"dsfm: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
