"""Command-line entry points for campaigns, kernel probes, and selftests.

Every subcommand validates its configuration up front, writes its artifacts
into the output directory together with a resolved-config echo, and is
byte-identical across reruns with the same config and seed. Exit codes:
0 success, 2 config error, 3 selftest failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import chaos, exact2d, nn, stats
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .estimator import windows_for
from .geometry import ConvexBody
from .process import ROLE_POINTS, derive_stream, sample_poisson

SCHEMA = "pv-lab/1"


# ---------------------------------------------------------------------------
# artifact helpers


def _jsonify(obj):
    """Make numpy scalars/arrays JSON-safe and map non-finite floats to
    null, recursively."""
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonify(payload), fh, indent=2)
        fh.write("\n")


def _write_rows_csv(path, rows, columns) -> None:
    """Dict rows to CSV; floats via repr() so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in (row[c] for c in columns)])


def _prepare_out(cfg: ExperimentConfig) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "config_resolved.json"), cfg.resolved())
    return cfg.out


def _lam_tag(lam: float) -> str:
    return f"{lam:g}"


def _single_lam(cfg: ExperimentConfig, command: str) -> float:
    if len(cfg.lams) != 1:
        raise ConfigError("lambda", f"{command} uses a single intensity, "
                                    f"got {len(cfg.lams)}")
    return cfg.lams[0]


def _run_campaigns(cfg: ExperimentConfig, body: ConvexBody) -> list:
    """One campaign per intensity; campaign k shifts the master seed by k
    so no two campaigns share streams (mirrors stats.variance_sweep)."""
    results = []
    for k, lam in enumerate(cfg.lams):
        results.append(stats.run_campaign(
            body, lam, cfg.replications, cfg.seed + k, cfg.estimator,
            n_query=cfg.n_query, stratified=cfg.stratified,
            epsilon=cfg.epsilon, threads=cfg.threads))
    return results


def _write_campaigns(results, out: str) -> None:
    for res in results:
        path = os.path.join(out, f"campaign_lam{_lam_tag(res.lam)}.csv")
        stats.write_campaign_csv(res, path)
        print(f"wrote {path}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    out = _prepare_out(cfg)
    results = _run_campaigns(cfg, cfg.body())
    _write_campaigns(results, out)
    summary = stats.summarize_campaigns(results)
    _write_json(os.path.join(out, "summary.json"), summary)
    for block in summary["per_lambda"]:
        var = block["var_pv"]
        print(f"lambda={block['lambda']:g} mean_pv={block['mean_pv']:.8g} "
              f"var_pv={'n/a' if var is None else format(var, '.6g')} "
              f"replications={block['replications']}")
    print(f"wrote {os.path.join(out, 'summary.json')}")
    return 0


def cmd_variance_sweep(cfg: ExperimentConfig, args) -> int:
    if len(cfg.lams) < 2:
        raise ConfigError("lambda", "variance-sweep needs at least two intensities")
    out = _prepare_out(cfg)
    body = cfg.body()
    results = _run_campaigns(cfg, body)
    _write_campaigns(results, out)
    summary = stats.summarize_campaigns(results)
    exponent = 1.0 + 1.0 / body.dim
    normalized = {}
    for block in summary["per_lambda"]:
        if block["var_pv"] is not None:
            normalized[_lam_tag(block["lambda"])] = block["var_pv"] * block["lambda"] ** exponent
    ratio = (max(normalized.values()) / min(normalized.values())
             if len(normalized) >= 2 else None)
    report = {"schema": SCHEMA, "per_lambda": summary["per_lambda"],
              "fit": summary["fit"],
              "bracket": {"exponent": exponent,
                          "normalized_variance": normalized,
                          "max_over_min": ratio}}
    _write_json(os.path.join(out, "variance_sweep.json"), report)
    fit = summary["fit"]
    if fit["slope"] is not None:
        se = fit["slope_se"]
        print(f"variance scaling: slope={fit['slope']:.4f} "
              f"(se={'n/a' if se is None else format(se, '.4f')}) "
              f"r2={fit['r2']:.5f}")
    if ratio is not None:
        print(f"bracket: var * lambda^{exponent:g} max/min = {ratio:.4f}")
    print(f"wrote {os.path.join(out, 'variance_sweep.json')}")
    return 0


def cmd_clt_test(cfg: ExperimentConfig, args) -> int:
    out = _prepare_out(cfg)
    results = _run_campaigns(cfg, cfg.body())
    _write_campaigns(results, out)
    summary = stats.summarize_campaigns(results)
    report = {"schema": SCHEMA, "per_lambda": summary["per_lambda"]}
    _write_json(os.path.join(out, "clt_test.json"), report)
    for block in summary["per_lambda"]:
        ks = block["ks_pvalue"]
        skew, kurt = block["skewness"], block["excess_kurtosis"]
        print(f"lambda={block['lambda']:g} "
              f"ks_pvalue={'n/a' if ks is None else format(ks, '.4f')} "
              f"skewness={'n/a' if skew is None else format(skew, '+.4f')} "
              f"excess_kurtosis={'n/a' if kurt is None else format(kurt, '+.4f')}")
    print(f"wrote {os.path.join(out, 'clt_test.json')}")
    return 0


def cmd_kernel_scan(cfg: ExperimentConfig, args) -> int:
    lam = _single_lam(cfg, "kernel-scan")
    out = _prepare_out(cfg)
    body = cfg.body()
    if cfg.scan_mode == "diameter":
        points = chaos.diameter_points(body, cfg.n_scan)
    else:
        points = chaos.scan_segment(body, lam, cfg.n_scan, epsilon=cfg.epsilon)
    rows = chaos.kernel_scan(body, lam, points, cfg.seed,
                             n_outer=cfg.n_outer, n_query=cfg.n_query,
                             epsilon=cfg.epsilon)
    columns = list(rows[0].keys())
    _write_rows_csv(os.path.join(out, "kernel_scan.csv"), rows, columns)
    sign_bad = envelope_bad = 0
    for row in rows:
        slack = 4.0 * row["stderr"]
        if row["inside"] and row["f1_hat"] < -slack:
            sign_bad += 1
        if not row["inside"] and row["f1_hat"] > slack:
            sign_bad += 1
        if abs(row["f1_hat"]) - slack > min(row["env_spread"], row["env_gap"]):
            envelope_bad += 1
    report = {"schema": SCHEMA, "lambda": lam, "scan_mode": cfg.scan_mode,
              "n_points": len(rows), "n_outer": cfg.n_outer,
              "sign_violations": sign_bad,
              "envelope_violations": envelope_bad,
              "max_abs_f1": max(abs(r["f1_hat"]) for r in rows),
              "rows_file": "kernel_scan.csv"}
    _write_json(os.path.join(out, "kernel_scan.json"), report)
    print(f"kernel scan: {len(rows)} points, sign_violations={sign_bad}, "
          f"envelope_violations={envelope_bad}")
    print(f"wrote {os.path.join(out, 'kernel_scan.csv')}")
    return 0


def cmd_f2_probe(cfg: ExperimentConfig, args) -> int:
    lam = _single_lam(cfg, "f2-probe")
    out = _prepare_out(cfg)
    body = cfg.body()
    pairs = chaos.probe_pairs(body, lam, cfg.n_pairs)
    rows = chaos.pair_probe(body, lam, pairs, cfg.seed,
                            n_outer=cfg.n_outer, n_query=cfg.n_query,
                            epsilon=cfg.epsilon)
    columns = list(rows[0].keys())
    _write_rows_csv(os.path.join(out, "f2_probe.csv"), rows, columns)
    envelope_bad = 0
    for row in rows:
        env = row["env_spread"]
        if row["env_gap_valid"]:
            env = min(env, row["env_gap"])
        if abs(row["f2_hat"]) - 4.0 * row["stderr"] > env:
            envelope_bad += 1
    report = {"schema": SCHEMA, "lambda": lam, "n_pairs": len(rows),
              "n_outer": cfg.n_outer, "envelope_violations": envelope_bad,
              "max_abs_f2": max(abs(r["f2_hat"]) for r in rows),
              "rows_file": "f2_probe.csv"}
    _write_json(os.path.join(out, "f2_probe.json"), report)
    print(f"f2 probe: {len(rows)} pairs, envelope_violations={envelope_bad}")
    print(f"wrote {os.path.join(out, 'f2_probe.csv')}")
    return 0


def cmd_exact2d(cfg: ExperimentConfig, args) -> int:
    if cfg.dim != 2:
        raise ConfigError("dim", "exact2d requires dim 2")
    lam = _single_lam(cfg, "exact2d")
    out = _prepare_out(cfg)
    body = cfg.body()
    w_out, w_proc = windows_for(body, lam, cfg.epsilon)
    # the mc campaign shares the per-replication point streams, so the rows
    # below compare both estimators on the same realizations
    mc = stats.run_campaign(body, lam, cfg.replications, cfg.seed, "mc",
                            n_query=cfg.n_query, stratified=cfg.stratified,
                            epsilon=cfg.epsilon, threads=cfg.threads)
    rows = []
    n_within = 0
    max_gap = 0.0
    first_sample = None
    for rep in range(cfg.replications):
        rng = derive_stream(cfg.seed, rep, ROLE_POINTS).generator()
        sample = sample_poisson(lam, w_proc, rng)
        if rep == 0:
            first_sample = sample
        res = exact2d.pv_exact(body, sample, w_out)
        diff = abs(mc.pv[rep] - res.pv_area)
        within = diff <= 4.0 * mc.mc_stderr[rep]
        n_within += int(within)
        max_gap = max(max_gap, res.covering_gap)
        rows.append({
            "replication": rep, "lambda": lam,
            "pv_exact": res.pv_area, "pv_mc": float(mc.pv[rep]),
            "symdiff_exact": res.symdiff_area,
            "symdiff_mc": float(mc.symdiff[rep]),
            "symdiff_bound": res.symdiff_bound,
            "covering_gap": res.covering_gap,
            "mc_stderr": float(mc.mc_stderr[rep]),
            "n_sites": res.n_sites, "n_in_body": res.n_in_body,
            "abs_diff": diff, "within_4se": int(within),
        })
    columns = list(rows[0].keys())
    _write_rows_csv(os.path.join(out, "exact2d.csv"), rows, columns)
    report = {"schema": SCHEMA, "lambda": lam,
              "replications": cfg.replications,
              "mean_pv_exact": sum(r["pv_exact"] for r in rows) / len(rows),
              "mean_abs_diff": sum(r["abs_diff"] for r in rows) / len(rows),
              "frac_within_4se": n_within / len(rows),
              "max_covering_gap": max_gap,
              "rows_file": "exact2d.csv"}
    _write_json(os.path.join(out, "exact2d.json"), report)
    if cfg.dump_geometry:
        cells = exact2d.voronoi_cells_clipped(first_sample.points, w_out)
        payload = {"schema": SCHEMA, "lambda": lam, "replication": 0,
                   "window": [list(map(float, b)) for b in
                              zip(w_out.lo, w_out.hi)],
                   "cells": [{"nucleus": list(map(float, c.nucleus)),
                              "area": c.area,
                              "touches_boundary": bool(c.touches_boundary),
                              "vertices": c.vertices.tolist()}
                             for c in cells]}
        _write_json(os.path.join(out, "exact2d_cells.json"), payload)
        print(f"wrote {os.path.join(out, 'exact2d_cells.json')}")
    print(f"exact oracle: {len(rows)} realizations, "
          f"frac_within_4se={n_within / len(rows):.3f}, "
          f"max_covering_gap={max_gap:.3g}")
    print(f"wrote {os.path.join(out, 'exact2d.csv')}")
    return 0


def cmd_small_body(cfg: ExperimentConfig, args) -> int:
    lam = _single_lam(cfg, "small-body")
    out = _prepare_out(cfg)
    report = stats.small_body_experiment(cfg.radii, lam, cfg.replications,
                                         cfg.seed, dim=cfg.dim,
                                         stratified=cfg.stratified,
                                         epsilon=cfg.epsilon,
                                         threads=cfg.threads)
    _write_json(os.path.join(out, "small_body.json"), report)
    fit = report["variance_fit_small_radii"]
    print(f"small-body: {len(report['rows'])} radii, "
          f"variance slope over smallest decade = {fit['slope']:.3f}, "
          f"surface slope = {report['surface_measure_slope']:.3f}")
    print(f"wrote {os.path.join(out, 'small_body.json')}")
    return 0


# ---------------------------------------------------------------------------
# selftest


def _check_nn_oracle(rng: np.random.Generator):
    """Index lookups must agree with brute force on every instance."""
    for _ in range(100):
        dim = int(rng.integers(2, 5))
        n = int(rng.integers(1, 400))
        pts = rng.uniform(-1.0, 1.0, size=(n, dim))
        queries = rng.uniform(-1.2, 1.2, size=(50, dim))
        index = nn.build_index(pts)
        idx, dist = nn.nearest(index, queries)
        bidx, bdist = nn.nearest_bruteforce(pts, queries)
        same = (idx == bidx) | (np.abs(dist - bdist) <= 1e-12 * (1.0 + bdist))
        if not np.all(same):
            return False, "index disagrees with brute force"
    return True, "100 instances, exact agreement"


def _check_covering_identity(rng: np.random.Generator):
    """Clipped cell areas must tile the window."""
    worst = 0.0
    from .geometry import Window
    for _ in range(40):
        n = int(rng.integers(1, 250))
        pts = rng.uniform(-1.5, 1.5, size=(n, 2))
        w = Window(np.array([-1.6, -1.6]), np.array([1.6, 1.6]))
        cells = exact2d.voronoi_cells_clipped(pts, w)
        gap = abs(sum(c.area for c in cells) - w.volume()) / w.volume()
        worst = max(worst, gap)
    return worst <= 1e-9, f"worst relative gap {worst:.3g}"


def _check_steiner(rng: np.random.Generator):
    """Dilated volume formula vs direct Monte Carlo."""
    body = ConvexBody.polygon(np.array([[0.0, 0.0], [1.3, 0.1], [0.4, 1.1]]))
    r = 0.25
    exact = body.dilated_volume(r)
    w = body.dilated_window(r + 1e-9)
    n = 200_000
    pts = rng.uniform(w.lo, w.hi, size=(n, 2))
    member = body.contains(pts) | (body.boundary_distance(pts) <= r)
    p = float(np.mean(member))
    mc = p * w.volume()
    se = w.volume() * math.sqrt(p * (1.0 - p) / n)
    ok = abs(mc - exact) <= 4.0 * se
    return ok, f"exact {exact:.5f}, mc {mc:.5f} +- {se:.5f}"


def _check_synthetic_fit():
    """fit_scaling must recover a pure power law to machine precision."""
    lams = np.array([100.0, 300.0, 1000.0, 3000.0])
    slope, intercept, r2 = stats.fit_scaling(lams, 2.7 * lams ** -1.5)
    ok = abs(slope + 1.5) < 1e-12 and abs(r2 - 1.0) < 1e-12
    return ok, f"slope {slope:.2e} vs -1.5"


def _check_campaign_determinism():
    """Same config and seed must give byte-identical campaign CSVs."""
    body = ConvexBody.ball(np.zeros(2), 1.0)
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            res = stats.run_campaign(body, 200.0, 6, 90125)
            path = os.path.join(tmp, f"run{k}.csv")
            stats.write_campaign_csv(res, path)
            with open(path, "rb") as fh:
                blobs.append(fh.read())
    return blobs[0] == blobs[1], f"{len(blobs[0])} bytes each"


def cmd_selftest(cfg: ExperimentConfig, args) -> int:
    rng = np.random.default_rng(np.random.Philox(key=cfg.seed))
    checks = [
        ("nn-oracle", lambda: _check_nn_oracle(rng)),
        ("covering-identity", lambda: _check_covering_identity(rng)),
        ("steiner-mc", lambda: _check_steiner(rng)),
        ("synthetic-fit", _check_synthetic_fit),
        ("campaign-determinism", _check_campaign_determinism),
    ]
    failures = 0
    for name, run in checks:
        ok, detail = run()
        failures += int(not ok)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 3 if failures else 0


# ---------------------------------------------------------------------------
# parser


_COMMANDS = [
    ("simulate", cmd_simulate, "run one estimation campaign per intensity"),
    ("variance-sweep", cmd_variance_sweep,
     "campaigns across intensities with the variance scaling fit"),
    ("clt-test", cmd_clt_test,
     "campaigns with normality diagnostics (KS, skewness, kurtosis)"),
    ("kernel-scan", cmd_kernel_scan,
     "first chaos kernel along a probe line, with envelope checks"),
    ("f2-probe", cmd_f2_probe, "second chaos kernel at probe pairs"),
    ("exact2d", cmd_exact2d,
     "exact planar cell areas vs the Monte Carlo estimator"),
    ("small-body", cmd_small_body,
     "variance decay for a shrinking ball at fixed intensity"),
    ("selftest", cmd_selftest, "run the built-in property checks"),
]

_SELFTEST_DEFAULTS = {"shape": "ball", "dim": 2, "radius": 1.0,
                      "lambda": [200.0], "replications": 4, "seed": 1905}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pvlab",
        description="Poisson-Voronoi volume approximation experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, func, help_text in _COMMANDS:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None,
                       help="path to a JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides config)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker thread cap (overrides config)")
        p.add_argument("--out", type=str, default=None,
                       help="output directory (overrides config)")
        p.add_argument("--epsilon", type=float, default=None,
                       help="window leak budget (overrides config)")
        if name == "exact2d":
            p.add_argument("--dump-geometry", action="store_true",
                           default=None,
                           help="also dump replication 0 cell geometry")
        p.set_defaults(func=func)
    return ap


def _config_from_args(args) -> ExperimentConfig:
    if args.config is not None:
        data = load_config(args.config)
    elif args.command == "selftest":
        data = dict(_SELFTEST_DEFAULTS)
    else:
        raise ConfigError("<file>", f"--config is required for {args.command}")
    overrides = {"seed": args.seed, "threads": args.threads,
                 "out": args.out, "epsilon": args.epsilon}
    if getattr(args, "dump_geometry", None):
        overrides["dump_geometry"] = True
    return parse_config(data, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(int(main()))
