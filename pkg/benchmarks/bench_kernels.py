"""Compare the numba and numpy variants of the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Both variants are called directly, so the MOLCYCLEGAN_DISABLE_NUMBA flag does
not matter here. When numba is unavailable the "loop" variant runs as plain
Python and only tiny sizes are timed.
"""
import argparse
import time

import numpy as np

from molcyclegan import kernels
from molcyclegan._accel import HAVE_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_knn(rng, n, nq, dim, k, repeat):
    table = rng.standard_normal((n, dim))
    queries = rng.standard_normal((nq, dim))
    rank = np.arange(n, dtype=np.int64)
    ref = kernels._knn_scan_numpy(table, queries, k, rank)
    got = kernels._knn_scan_loop(table, queries, k, rank)  # also triggers compilation
    assert np.array_equal(ref[0], got[0])
    t_loop = best_of(lambda: kernels._knn_scan_loop(table, queries, k, rank), repeat)
    t_np = best_of(lambda: kernels._knn_scan_numpy(table, queries, k, rank), repeat)
    return t_loop, t_np


def bench_tanimoto(rng, n, words, repeat):
    pool = rng.integers(0, 2**63, size=(n, words), dtype=np.uint64)
    query = pool[0].copy()
    assert np.allclose(kernels._tanimoto_many_loop(query, pool), kernels._tanimoto_many_numpy(query, pool))
    t_loop = best_of(lambda: kernels._tanimoto_many_loop(query, pool), repeat)
    t_np = best_of(lambda: kernels._tanimoto_many_numpy(query, pool), repeat)
    return t_loop, t_np


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    scale = 1 if HAVE_NUMBA else 20
    print(f"loop variant compiled with numba: {HAVE_NUMBA}")
    print(f"{'kernel':<34}{'loop [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    cases = [
        (f"knn n={20000 // scale} q=80 k=1", lambda: bench_knn(rng, 20000 // scale, 80, 56, 1, args.repeat)),
        (f"knn n={20000 // scale} q=80 k=10", lambda: bench_knn(rng, 20000 // scale, 80, 56, 10, args.repeat)),
        (f"tanimoto n={50000 // scale} w=32", lambda: bench_tanimoto(rng, 50000 // scale, 32, args.repeat)),
    ]
    for name, run in cases:
        t_loop, t_np = run()
        print(f"{name:<34}{t_loop * 1e3:>12.2f}{t_np * 1e3:>12.2f}{t_np / t_loop:>10.2f}")


if __name__ == "__main__":
    main()
