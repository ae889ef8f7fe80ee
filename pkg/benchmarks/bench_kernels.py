"""Time the compiled and pure-Python kernels on identical inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeats 5]

Prints one line per kernel with the median wall time of each backend, the
speedup and the largest absolute difference between their outputs.
"""
import argparse
import statistics
import time

import numpy as np

from subsetgrad import _kernels_py

try:
    from subsetgrad import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _gram(n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = X[:, :3] @ np.array([3.0, 1.5, 2.0]) + rng.normal(size=n)
    return X.T @ X, X.T @ y, float(y @ y)


def _time(fn, repeats):
    out, times = None, []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def cases(seed=0):
    G, b, _ = _gram(60, 200, seed)
    Z = (np.random.default_rng(seed + 1).random((200, 200)) < 0.1).astype(np.uint8)
    yield "subset_quad_batch 200 draws, p=200, ~20 active", "subset_quad_batch", (G, b, Z, 0.0)
    yield "subset_quad_batch ridge", "subset_quad_batch", (G + np.eye(200), b, Z, 1.0)
    G, b, yy = _gram(50, 14, seed)
    yield "best_subset_search p=14", "best_subset_search", (G, b, yy, 50, 0.04, np.arange(14))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels_c is None:
        print("compiled extension not built; run `pip install --no-build-isolation -e .` first")
        return 1
    print(f"{'case':<48}{'cython s':>11}{'python s':>11}{'speedup':>9}{'max diff':>11}")
    for label, name, inputs in cases():
        tc, oc = _time(lambda: getattr(_kernels_c, name)(*inputs), args.repeats)
        tp, op = _time(lambda: getattr(_kernels_py, name)(*inputs), args.repeats)
        diff = max(float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(c, dtype=float))))
                   for a, c in zip(oc, op))
        print(f"{label:<48}{tc:>11.4f}{tp:>11.4f}{tp / tc:>9.1f}{diff:>11.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
