"""Time the compiled and pure-Python Jacobi SVD backends on the same inputs.

    python3 benchmarks/bench_jacobi.py [--repeats N]

Prints one line per shape with the median time of each backend, the speedup
and the largest singular-value disagreement between the two.
"""

import argparse
import statistics
import time

import numpy as np

from symopt.matcore import svd

SHAPES = ((8, 8), (16, 4), (64, 8), (32, 32), (64, 64))


def _time(fn, repeats):
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'shape':>8} {'cython_ms':>10} {'python_ms':>10} {'speedup':>8} {'max_dsigma':>11}")
    for m, n in SHAPES:
        A = rng.standard_normal((m, n))
        tc = _time(lambda: svd(A, backend="cython"), args.repeats)
        tp = _time(lambda: svd(A, backend="python"), max(3, args.repeats // 4))
        ds = float(np.max(np.abs(svd(A, backend="cython").sigma - svd(A, backend="python").sigma)))
        print(f"{m:>3}x{n:<4} {tc * 1e3:>10.3f} {tp * 1e3:>10.3f} {tp / tc:>8.1f} {ds:>11.2e}")


if __name__ == "__main__":
    main()
