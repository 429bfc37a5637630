"""Nearest-neighbor throughput: numba kernels vs numpy fallback vs brute force.

The dispatch between the jit kernels and the numpy fallback happens at
import time via PVLAB_DISABLE_NUMBA, so the two modes are timed in child
processes. Run from the repository root:

    python3 benchmarks/bench_nn.py
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np


def run_single(dim, sizes, n_queries, repeats):
    from pvlab import nn
    from pvlab.kernels import NUMBA_ENABLED

    mode = "numba" if NUMBA_ENABLED else "numpy"
    rng = np.random.default_rng(1905)
    # warm the jit compiler before timing anything
    warm = rng.random((256, dim))
    nn.nearest(nn.build_index(warm), rng.random((256, dim)))

    print(f"mode={mode} dim={dim} n_queries={n_queries}")
    print(f"{'n_points':>10} {'build_ms':>9} {'query_ns':>9} {'brute_ns':>9} {'speedup':>8}")
    for n in sizes:
        pts = rng.random((n, dim))
        queries = rng.random((n_queries, dim))
        t0 = time.perf_counter()
        index = nn.build_index(pts)
        build_ms = (time.perf_counter() - t0) * 1e3

        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            idx, dist = nn.nearest(index, queries)
            best = min(best, time.perf_counter() - t0)
        query_ns = best / n_queries * 1e9

        bbest = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            bidx, bdist = nn.nearest_bruteforce(pts, queries)
            bbest = min(bbest, time.perf_counter() - t0)
        brute_ns = bbest / n_queries * 1e9

        if not np.all((idx == bidx) | (np.abs(dist - bdist) <= 1e-12 * (1.0 + bdist))):
            raise AssertionError(f"grid and brute force disagree at n={n}")
        print(f"{n:>10} {build_ms:>9.2f} {query_ns:>9.0f} {brute_ns:>9.0f} "
              f"{brute_ns / query_ns:>8.1f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--sizes", type=int, nargs="+",
                    default=[1000, 10000, 100000])
    ap.add_argument("--n-queries", type=int, default=200000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--single", action="store_true",
                    help="time the current process only (no child runs)")
    args = ap.parse_args()

    if args.single:
        run_single(args.dim, args.sizes, args.n_queries, args.repeats)
        return

    base = [sys.executable, os.path.abspath(__file__), "--single",
            "--dim", str(args.dim), "--n-queries", str(args.n_queries),
            "--repeats", str(args.repeats), "--sizes"]
    base += [str(n) for n in args.sizes]
    for disable in ("0", "1"):
        env = dict(os.environ, PVLAB_DISABLE_NUMBA=disable)
        subprocess.run(base, env=env, check=True)
        print()


if __name__ == "__main__":
    main()
