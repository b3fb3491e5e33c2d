"""Compare the compiled and pure-Python eigenvalue-equation solvers.

Usage::

    python benchmarks/bench_kernels.py [--sizes 1000 10000 100000] [--repeat 5]

For each batch size and power ``q`` the script reports the best wall time
of each available backend, the speedup, and whether both backends return
bit-identical roots.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from piwcov import kernels


def bench(size: int, q: int, repeat: int) -> dict:
    rng = np.random.default_rng(size + q)
    ell = rng.gamma(1.0, 2.0, size)
    n, p, m = 50, 20, 25.0
    out = {"size": size, "q": q}
    roots = {}
    for name in kernels.available_backends():
        call = lambda: kernels.solve_eigen_batch(ell, n, p, m, q, backend=name)  # noqa: E731
        roots[name] = call()[0]
        out[name] = min(timeit.repeat(call, number=1, repeat=repeat))
    if len(roots) == 2:
        out["speedup"] = out["python"] / out["cython"]
        out["identical"] = bool(np.array_equal(roots["python"], roots["cython"]))
    return out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    parser.add_argument("--q", type=int, nargs="+", default=[3, 5])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    print(f"backends: {', '.join(kernels.available_backends())} (default {kernels.BACKEND})")
    print(f"{'size':>8} {'q':>2} {'python s':>10} {'cython s':>10} {'speedup':>8} identical")
    for size in args.sizes:
        for q in args.q:
            r = bench(size, q, args.repeat)
            cy = f"{r['cython']:10.4f}" if "cython" in r else f"{'n/a':>10}"
            sp = f"{r['speedup']:8.1f}" if "speedup" in r else f"{'n/a':>8}"
            print(f"{size:>8} {q:>2} {r['python']:10.4f} {cy} {sp} {r.get('identical', '')}")


if __name__ == "__main__":
    main()
