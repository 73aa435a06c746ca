"""Time the numba and numpy variants of each hot kernel.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 1048576]

Run with UCPLAB_DISABLE_NUMBA=1 to confirm the dispatcher falls back; the
direct ``*_loop`` timings are then plain-Python loops and only small sizes
are sensible.
"""

import argparse
import time

import numpy as np

from ucplab import _kernels as K


def best_of(fn, repeat):
    fn()  # warm-up, includes jit compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(size, rng):
    m = int(round(size ** 0.5))
    a = rng.standard_normal((1, m, m))
    abs2 = rng.random(size)
    r = rng.random(size) * 2.0
    radii = np.geomspace(1e-3, 1.5, 64)
    k = np.exp(rng.uniform(0, 9, size=(size // 4, 4))) * rng.choice([-1.0, 1.0], size=(size // 4, 4))
    return {
        "second_difference": (lambda: K.second_difference_numpy(a, True), lambda: K.second_difference_loop(a, True)),
        "ball_weighted_sum": (lambda: K.ball_weighted_sum_numpy(abs2, r, 1.0, 6.0, 1e-3),
                              lambda: K.ball_weighted_sum_loop(abs2, r, 1.0, 6.0, 1e-3)),
        "ball_masses": (lambda: K.ball_masses_numpy(abs2, r, radii), lambda: K.ball_masses_loop(abs2, r, radii)),
        "symbol_scan": (lambda: K.symbol_scan_numpy(k, 2.6, 1e-12), lambda: K.symbol_scan_loop(k, 2.6, 1e-12)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=2**20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    size = args.size if K.USING_NUMBA else min(args.size, 2**14)
    print(f"numba active: {K.USING_NUMBA}, size = {size}")
    print(f"{'kernel':<20} {'numpy [ms]':>12} {'loop [ms]':>12} {'speedup':>9}")
    for name, (f_np, f_loop) in cases(size, np.random.default_rng(args.seed)).items():
        t_np = best_of(f_np, args.repeat)
        t_lp = best_of(f_loop, args.repeat)
        print(f"{name:<20} {1e3 * t_np:12.3f} {1e3 * t_lp:12.3f} {t_np / t_lp:9.2f}")


if __name__ == "__main__":
    main()
