"""Compare the numba kernels against their pure-numpy fallbacks, plus TNMS scaling.

    python benchmarks/bench_kernels.py [--repeats 5]

The fallback timings call ``kernel.py_func`` in the same process, which is
exactly the code path used when ``CONFTREE_DISABLE_NUMBA=1`` is set.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from conftree._accel import NUMBA_ENABLED, py_func
from conftree.kernels import greedy_accept, hungarian_kernel, union_find_labels
from conftree.tnms import runtime_scaling_probe


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"numba enabled: {NUMBA_ENABLED}")
    print(f"{'kernel':<28}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")

    cases = []
    for n in (20, 100, 300):
        c = rng.random((n, n))
        cases.append((f"hungarian n={n}", hungarian_kernel, (c,)))
    for k in (10_000, 200_000):
        a = rng.integers(0, k // 4, k)
        b = rng.integers(0, k // 4, k)
        cases.append((f"greedy_accept pairs={k}", greedy_accept, (a, b, k // 4, k // 4)))
        cases.append((f"union_find pairs={k}", union_find_labels, (k // 4, a, b)))

    for name, kern, kargs in cases:
        kern(*kargs)  # compile / warm
        fast = best_of(lambda: kern(*kargs), args.repeats)
        slow = best_of(lambda: py_func(kern)(*kargs), max(1, args.repeats // 2))
        print(f"{name:<28}{1e3 * fast:>12.2f}{1e3 * slow:>12.2f}{slow / fast:>9.1f}x")

    print()
    runtime_scaling_probe(1000)  # warm
    t1 = runtime_scaling_probe(1000, repeats=args.repeats)
    t10 = runtime_scaling_probe(10_000, repeats=max(1, args.repeats // 2))
    print(f"tnms 1k nodes:  {1e3 * t1:8.1f} ms")
    print(f"tnms 10k nodes: {1e3 * t10:8.1f} ms  (ratio {t10 / t1:.1f})")


if __name__ == "__main__":
    main()
