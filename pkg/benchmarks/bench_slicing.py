"""Compare the compiled and pure-Python path-extraction kernels.

Usage::

    python3 benchmarks/bench_slicing.py [--rows 5000] [--repeat 3] [--hidden 32]

Both kernels receive identical relative-activation matrices, so the timing
isolates the greedy backward trace. The script also checks that the two
backends return the same edge lists.
"""

import argparse
import time

import numpy as np

from fairrepair.nn import build_network
from fairrepair.slicing import BACKENDS, SliceParams, _relative_matrix, _seeds, pack_network, profile_averages


def time_kernel(kernel, rel, packed, seeds, gamma, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = kernel.extract_paths(rel, *packed, seeds, gamma)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--rows", type=int, default=5000)
    ap.add_argument("--features", type=int, default=20)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--gamma", type=float, default=0.8)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    h = args.hidden
    net = build_network([args.features, h, h, h, 2], seed=args.seed)
    X = rng.normal(size=(args.rows, args.features))
    profile = profile_averages(net, X)
    rel, out_post = _relative_matrix(net, X, profile)
    seeds = _seeds(net, out_post, None, SliceParams(args.gamma))
    packed = pack_network(net)

    results = {}
    for name in sorted(BACKENDS):
        secs, out = time_kernel(BACKENDS[name], rel, packed, seeds, args.gamma, args.repeat)
        results[name] = (secs, out)
        print(f"{name:>8}: {secs:8.4f}s  ({args.rows / secs:,.0f} rows/s)")

    if "cython" in results:
        (e1, o1), (e2, o2) = results["cython"][1], results["python"][1]
        same = np.array_equal(e1, e2) and np.array_equal(o1, o2)
        print(f"speed-up: {results['python'][0] / results['cython'][0]:.1f}x; outputs identical: {same}")
    else:
        print("compiled backend not built; only the pure-Python kernel was timed")


if __name__ == "__main__":
    main()
