"""Time the numba kernels against the pure-numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import time

import numpy as np

from transport_approx import _kernels


def _best(fn, repeat):
    fn()  # warm-up (also triggers numba compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    x = rng.uniform(-1.0, 1.0, 200_000)
    xg = rng.standard_normal(200_000)
    a = rng.standard_normal(3000)
    b = rng.standard_normal(3000)
    return {
        "cc_weights(4001)": lambda k: k.cc_weights(4001),
        "legendre_table(20, 2e5)": lambda k: k.legendre_table(20, x),
        "hermite_function_table(20, 2e5)": lambda k: k.hermite_function_table(20, xg),
        "hermite_poly_table(20, 2e5)": lambda k: k.hermite_poly_table(20, xg),
        "gaussian_kernel_sum(3e3 x 3e3)": lambda k: k.gaussian_kernel_sum(a, b, 1.0),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", default="")
    args = parser.parse_args(argv)
    if _kernels.numba_kernels is None:
        print("numba is not installed; only the numpy path can be timed")
    results = []
    for name, run in cases(np.random.default_rng(0)).items():
        t_np = _best(lambda: run(_kernels.numpy_kernels), args.repeat)
        t_nb = (_best(lambda: run(_kernels.numba_kernels), args.repeat)
                if _kernels.numba_kernels is not None else float("nan"))
        results.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "speedup": t_np / t_nb})
        print(f"{name:36s} numpy {t_np * 1e3:9.2f} ms   numba {t_nb * 1e3:9.2f} ms   "
              f"x{t_np / t_nb:6.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
