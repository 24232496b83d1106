"""Benchmark the banded kernels: compiled extension vs numpy fallback.

Usage: python benchmarks/bench_kernels.py [--orders 500,2000,8000]
       [--bandwidths 20,60] [--repeats 5]

Times the three hot kernels (banded Cholesky, forward solve, lower matvec)
on synthetic SPD banded matrices and prints one table row per case with
the speedup of the compiled backend.
"""

import argparse
import importlib
import time

import numpy as np

from mfbootstrap._kernels import _banded_py


def load_backends():
    backends = {"python": _banded_py}
    try:
        backends["cython"] = importlib.import_module("mfbootstrap._kernels._banded_cy")
    except ImportError:
        pass
    return backends


def spd_banded(rng, order, bandwidth):
    ab = np.zeros((bandwidth + 1, order))
    for k in range(1, bandwidth + 1):
        if k < order:
            ab[k, : order - k] = 0.5 * rng.standard_normal(order - k) / (1 + k)
    ab[0, :] = 2.0 * (bandwidth + 1) + rng.random(order)
    return ab


def best_time(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--orders", default="500,2000,8000")
    parser.add_argument("--bandwidths", default="20,60")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = load_backends()
    if "cython" not in backends:
        print("compiled backend not built; timing the python fallback only")

    rng = np.random.default_rng(0)
    header = f"{'kernel':<14} {'order':>6} {'band':>5} " + " ".join(
        f"{name + ' (ms)':>14}" for name in backends
    )
    if len(backends) == 2:
        header += f" {'speedup':>8}"
    print(header)
    print("-" * len(header))

    for order in (int(x) for x in args.orders.split(",")):
        for bandwidth in (int(x) for x in args.bandwidths.split(",")):
            ab = spd_banded(rng, order, bandwidth)
            x = rng.standard_normal(order)
            lb_ref, info = _banded_py.cholesky_banded_lower(ab)
            assert info == 0
            cases = {
                "cholesky": lambda mod: mod.cholesky_banded_lower(ab),
                "forward_solve": lambda mod: mod.forward_solve_banded(lb_ref, x),
                "lower_matvec": lambda mod: mod.banded_lower_matvec(lb_ref, x),
            }
            for kernel, run in cases.items():
                row = f"{kernel:<14} {order:>6} {bandwidth:>5} "
                timings = {}
                for name, mod in backends.items():
                    timings[name] = best_time(lambda: run(mod), args.repeats)
                    row += f"{timings[name] * 1e3:>14.3f}"
                if len(timings) == 2:
                    row += f" {timings['python'] / timings['cython']:>7.1f}x"
                print(row)


if __name__ == "__main__":
    main()
