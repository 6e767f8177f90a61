"""Compare the compiled and numpy kernel backends on the hot translation paths.

    python3 benchmarks/bench_kernels.py [--N 24] [--rows 2000] [--repeat 5]

Prints the median wall time per call for each kernel and backend, the
speed-up, and the max abs difference between the two backends' outputs.
"""
import argparse
import statistics
import time

import numpy as np

from hermspde import kernels
from hermspde.sobolev import translation_rule


def _time(fn, repeat):
    fn()
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=24)
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    K = args.N + 1
    nodes, sw = translation_rule(args.N)
    A = rng.standard_normal((args.rows, K)) / np.sqrt(1.0 + np.arange(K))
    B = rng.standard_normal(K)
    z = rng.uniform(-3.0, 3.0, args.rows)
    x = rng.uniform(-6.0, 6.0, args.rows * 8)
    cases = {
        "hermite_table": lambda: kernels.hermite_table(K, x),
        "translate_rows": lambda: kernels.translate_rows(A, z, nodes, sw, K),
        "shifted_overlap": lambda: kernels.shifted_overlap(A, B, z, nodes, sw),
    }
    try:
        kernels.use_backend("cython")
    except ImportError:
        print("compiled backend not built; only the numpy fallback is available")
        return 1
    print(f"N={args.N} rows={args.rows} repeat={args.repeat} threads={kernels.worker_count()}")
    print(f"{'kernel':<16} {'cython [ms]':>12} {'python [ms]':>12} {'speed-up':>9} {'max |diff|':>11}")
    for name, fn in cases.items():
        kernels.use_backend("cython")
        tc, oc = _time(fn, args.repeat), fn()
        kernels.use_backend("python")
        tp, op = _time(fn, args.repeat), fn()
        print(f"{name:<16} {1e3 * tc:12.3f} {1e3 * tp:12.3f} {tp / tc:9.2f} {np.max(np.abs(oc - op)):11.2e}")
    kernels.use_backend("cython")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
