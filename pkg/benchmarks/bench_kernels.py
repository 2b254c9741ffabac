"""Compiled vs pure-Python integrand: single quad calls and a full steady state.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import statistics
import time

from scipy.integrate import quad

from qlchain import kernels
from qlchain.correlations import stationary_correlations
from qlchain.model import BathConfig, ordered_chain
from qlchain.response import response_set
from qlchain.spectral import mode_basis

PARAMS = [-0.05, 1.3, 2.0, 10.0, 3.0, 0.0, 0.0, 1.0, 0.0, 0.0]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--length", type=int, default=20)
    args = ap.parse_args()

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled extension not available; timing the pure-Python backend only")

    basis = mode_basis(ordered_chain(args.length))
    resp = response_set(basis, BathConfig(2.0, 10.0, 5.0, 2.0))

    rows = []
    for b in backends:
        f = kernels.make_integrand(PARAMS, b)
        one = best_of(lambda: quad(f, 0.0, 500.0, limit=500, epsabs=1e-11, epsrel=1e-10), args.repeat)
        full = best_of(lambda: stationary_correlations(resp, backend=b), max(1, args.repeat // 2))
        rows.append((b, one, full))

    print(f"{'backend':8s} {'quad call (ms)':>16s} {'steady state l=%d (s)' % args.length:>24s}")
    for b, one, full in rows:
        print(f"{b:8s} {one[0] * 1e3:10.3f} ({one[1] * 1e3:.3f}) {full[0]:16.3f} ({full[1]:.3f})")
    if len(rows) == 2:
        print(f"speedup: quad x{rows[0][1][0] / rows[1][1][0]:.1f}, steady state x{rows[0][2][0] / rows[1][2][0]:.1f}")
    print("columns: best (median)")


if __name__ == "__main__":
    main()
