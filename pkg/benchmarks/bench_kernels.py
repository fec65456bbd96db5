"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--k 30] [--s 15] [--repeat 5]

Both backends run on identical inputs; the script also checks that they
agree before reporting timings.
"""
import argparse
import time

import numpy as np

from birdify import _accel, kernels


def _best(fn, repeat):
    fn()  # warm-up (triggers compilation for numba)
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def problem(k, s, seed=0):
    rng = np.random.default_rng(seed)
    centres = rng.uniform(-8, 8, size=(k, 1, 2))
    rays = rng.normal(size=(k, 1, 2))
    rays /= np.linalg.norm(rays, axis=2, keepdims=True)
    cand = centres + np.linspace(-0.3, 0.3, s)[None, :, None] * rays
    ei, ej = np.triu_indices(k, 1)
    unary = rng.uniform(0, 2, size=(k, s))
    return cand, ei.astype(np.int64), ej.astype(np.int64), unary


def run(k, s, repeat):
    cand, ei, ej, unary = problem(k, s)
    small = problem(5, 7, seed=1)
    rows = []
    for name in ("pair table", "min-sum", "brute force K=5 S=7"):
        times = {}
        outs = {}
        for backend in (True, False):
            _accel.set_numba(backend)
            if name == "pair table":
                fn = lambda: kernels.gaussian_force_table(cand, ei, ej, 1.0)  # noqa: E731
            elif name == "min-sum":
                pair = kernels.gaussian_force_table(cand, ei, ej, 1.0)
                fn = lambda: kernels.minsum(unary, ei, ej, pair)[0]  # noqa: E731
            else:
                c, a, b, u = small
                pair_s = kernels.gaussian_force_table(c, a, b, 1.0)
                fn = lambda: kernels.brute_force(u, a, b, pair_s)  # noqa: E731
            times[backend] = _best(fn, repeat)
            outs[backend] = fn()
        if not np.allclose(outs[True], outs[False]):
            raise SystemExit(f"{name}: backends disagree")
        rows.append((name, times[True], times[False]))
    _accel.set_numba(_accel.HAVE_NUMBA)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--k", type=int, default=30, help="pedestrians per frame")
    ap.add_argument("--s", type=int, default=15, help="candidates per pedestrian")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"K={args.k} S={args.s} edges={args.k * (args.k - 1) // 2}")
    print(f"{'kernel':<22}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}")
    for name, tn, tp in run(args.k, args.s, args.repeat):
        print(f"{name:<22}{tn * 1e3:>12.3f}{tp * 1e3:>12.3f}{tp / tn:>9.1f}x")


if __name__ == "__main__":
    main()
