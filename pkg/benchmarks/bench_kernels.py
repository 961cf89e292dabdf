"""Time each hot kernel under the numba and numpy backends.

    python benchmarks/bench_kernels.py [--n 4000] [--dim 64] [--repeat 5]

Numba timings exclude the first (compiling) call. Outputs from the two
backends are compared for exact equality on the same inputs.
"""

import argparse
import time

import numpy as np

from tcm_al import _kernels


def _cases(n, dim, rng):
    points = rng.standard_normal((n, dim))
    centroids = points[rng.choice(n, 50, replace=False)].copy()
    labels = rng.integers(0, 50, n)
    center = points[0].copy()
    cluster = np.ascontiguousarray(points[: min(n, 1500)])

    # sparse ball graph over a 1-D line so it stays small
    line = np.sort(rng.uniform(0, n / 10, n))
    lo = np.searchsorted(line, line - 0.5)
    hi = np.searchsorted(line, line + 0.5, side="right")
    indptr = np.concatenate([[0], np.cumsum(hi - lo)]).astype(np.int64)
    indices = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)]).astype(np.int64)
    covered = np.zeros(n, dtype=np.bool_)
    eligible = np.ones(n, dtype=np.bool_)

    return {
        "sq_dists": lambda k: k(points[:500], points),
        "assign": lambda k: k(points, centroids),
        "update_centroids": lambda k: k(points, labels, centroids),
        "min_sq_update": lambda k: k(points, center, np.full(n, np.inf)),
        "knn_mean_dist": lambda k: k(cluster, 20),
        "probcover_greedy": lambda k: k(indptr, indices, covered.copy(), eligible, 50),
    }


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=4000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    cases = _cases(args.n, args.dim, np.random.default_rng(0))
    print(f"N={args.n} D={args.dim} best of {args.repeat}")
    print(f"{'kernel':<18}{'numpy ms':>11}{'numba ms':>11}{'speedup':>9}  equal")
    for name, call in cases.items():
        fast = _kernels.BACKENDS["numba"][name]
        slow = _kernels.BACKENDS["numpy"][name]
        equal = _same(call(fast), call(slow))  # also warms up the jit
        t_slow = _best_of(lambda: call(slow), args.repeat)
        t_fast = _best_of(lambda: call(fast), args.repeat)
        print(f"{name:<18}{t_slow * 1e3:>11.2f}{t_fast * 1e3:>11.2f}{t_slow / t_fast:>8.1f}x  {equal}")


if __name__ == "__main__":
    main()
