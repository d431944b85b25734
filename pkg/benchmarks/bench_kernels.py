"""Time the compiled KDE kernel against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``; pass ``--quick`` for a
smaller sweep. Each case reports the best of ``--repeat`` runs and the
maximum absolute difference between the two backends.
"""

import argparse
import time

import numpy as np

from covgeom import kernels

CASES = [(1, 2000, 20_000), (2, 2000, 20_000), (5, 1000, 20_000), (2, 20_000, 20_000)]
QUICK = [(1, 500, 5000), (3, 500, 5000)]


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(cases, repeat):
    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'dim':>4}{'queries':>9}{'samples':>9}{'python s':>11}{'active s':>11}{'speedup':>9}{'max diff':>11}")
    for dim, m, n in cases:
        samples = rng.standard_normal((n, dim))
        query = rng.standard_normal((m, dim))
        h = np.full(dim, 0.3)
        t_py, (lp_py, sc_py) = best_time(lambda: kernels.py_kde_logpdf_score(query, samples, h), repeat)
        t_c, (lp_c, sc_c) = best_time(lambda: kernels.kde_logpdf_score(query, samples, h), repeat)
        diff = max(np.abs(lp_py - lp_c).max(), np.abs(sc_py - sc_c).max())
        print(f"{dim:>4}{m:>9}{n:>9}{t_py:>11.3f}{t_c:>11.3f}{t_py / t_c:>9.2f}{diff:>11.2e}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--quick", action="store_true")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    run(QUICK if args.quick else CASES, args.repeat)
