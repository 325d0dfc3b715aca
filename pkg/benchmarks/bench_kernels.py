"""Compare the numba kernels with their numpy fallbacks.

    python benchmarks/bench_kernels.py [--n 32] [--repeat 5]

Prints best-of-repeat wall times and the max difference between the two paths.
"""

import argparse
import time

import numpy as np

from lagrangian_euler import _kernels as K


def best_time(fn, repeat):
    fn()  # warm-up (includes JIT compilation on the first call)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=32, help="grid points per axis for det/cofactor")
    ap.add_argument("--points", type=int, default=2000, help="sample points for trig_sum")
    ap.add_argument("--band", type=int, default=5, help="wavenumbers |k| <= band for trig_sum")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    m = np.ascontiguousarray(rng.standard_normal((3, 3, args.n ** 3)))
    kvals = np.arange(-args.band, args.band + 1, dtype=float)
    nk = len(kvals)
    coef = rng.standard_normal((3, nk, nk, nk)) + 1j * rng.standard_normal((3, nk, nk, nk))
    pts = rng.uniform(0, 2 * np.pi, (args.points, 3))

    cases = [("det3", lambda: K.det3(m), lambda: K.det3_numpy(m)),
             ("cofactor3", lambda: K.cofactor3(m), lambda: K.cofactor3_numpy(m)),
             ("trig_sum", lambda: K.trig_sum(coef, kvals, pts), lambda: K.trig_sum_numpy(coef, kvals, pts))]

    print(f"numba active: {K.HAS_NUMBA}")
    print(f"{'kernel':<10} {'default [s]':>12} {'numpy [s]':>12} {'speedup':>8} {'max diff':>10}")
    for name, fast, slow in cases:
        tf, ts = best_time(fast, args.repeat), best_time(slow, args.repeat)
        diff = float(np.max(np.abs(fast() - slow())))
        print(f"{name:<10} {tf:12.4f} {ts:12.4f} {ts / tf:8.1f} {diff:10.1e}")


if __name__ == "__main__":
    main()
