"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  Each kernel is called on
identical inputs through both backends; the table reports the best of
several repeats and the speed-up of the compiled version.
"""
import argparse
import timeit

import numpy as np

from ctmc_lumper import _kernels_py as pure

try:
    from ctmc_lumper import _kernels as compiled
except ImportError:  # pragma: no cover
    compiled = None


def _generator(rng, n):
    A = rng.uniform(0.1, 1.0, (n, n))
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, -A.sum(axis=1))
    return A


def cases(n, k):
    rng = np.random.default_rng(0)
    A = _generator(rng, n)
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    nu, zeta = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
    theta = np.log(rng.dirichlet(np.ones(n)))
    idx = np.arange(n, dtype=np.intp) % 2
    cg, eta = rng.dirichlet(np.ones(2), size=k), rng.dirichlet(np.ones(2), size=k)
    return {
        "relative_entropy": lambda m: m.relative_entropy(nu, zeta),
        "fisher_information": lambda m: m.fisher_information(A, zeta, nu),
        "lsi_descent": lambda m: m.lsi_descent(off, zeta, theta, 1e-10),
        "g_series": lambda m: m.g_series(A, idx, cg, eta),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10, help="number of states")
    ap.add_argument("--k", type=int, default=2000, help="time points for g_series")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if compiled is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':<20}{'python [us]':>14}{'cython [us]':>14}{'speed-up':>10}")
    for name, fn in cases(args.n, args.k).items():
        number = 3 if name == "lsi_descent" else 200
        tp = min(timeit.repeat(lambda: fn(pure), number=number, repeat=args.repeat)) / number
        if compiled is None:
            print(f"{name:<20}{tp * 1e6:>14.1f}{'-':>14}{'-':>10}")
            continue
        tc = min(timeit.repeat(lambda: fn(compiled), number=number, repeat=args.repeat)) / number
        print(f"{name:<20}{tp * 1e6:>14.1f}{tc * 1e6:>14.1f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
