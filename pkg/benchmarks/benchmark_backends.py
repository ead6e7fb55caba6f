"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the dominant workload of the package (batched weighted pair sums over
quadrature nodes, the inner loop of every Gram assembly) on both backends,
reports timings, and verifies the results are bitwise identical.

Usage: python benchmarks/benchmark_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from bergbundle import backend


def workloads():
    rng = np.random.default_rng(0)
    cases = []
    for label, dim, nodes in (
        ("gram degree 8, Q=80 grid", 9, 12800),
        ("gram degree 12, Q=80 grid", 13, 12800),
        ("fiber gram twist 5, Q=40 chart", 4, 3200),
    ):
        V = rng.standard_normal((dim, nodes)) + 1j * rng.standard_normal((dim, nodes))
        dens = (rng.uniform(0.5, 1.5, nodes) * np.exp(
            1j * rng.uniform(0, 2 * np.pi, nodes))
        )
        cases.append((label, V, dens))
    return cases


def time_fn(fn, repeats):
    fn()  # warm-up (JIT compile / allocator)
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    if backend.BACKEND != "numba":
        print("numba backend unavailable; nothing to compare "
              f"(BACKEND={backend.BACKEND})")
        return

    print(f"{'workload':36} {'numba':>10} {'numpy':>10} {'speedup':>8}  bitwise")
    for label, V, dens in workloads():
        fast = time_fn(lambda: backend.pair_integrals(V, V, dens), args.repeats)
        slow = time_fn(lambda: backend._pair_integrals_numpy(V, V, dens), args.repeats)
        same = np.array_equal(
            backend.pair_integrals(V, V, dens).view(np.float64),
            backend._pair_integrals_numpy(V, V, dens).view(np.float64),
        )
        print(f"{label:36} {fast * 1e3:9.2f}ms {slow * 1e3:9.2f}ms "
              f"{slow / fast:7.1f}x  {same}")


if __name__ == "__main__":
    main()
