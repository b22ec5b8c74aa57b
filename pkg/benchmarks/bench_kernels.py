"""Time the compiled and numpy kernel backends on the same inputs.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``. Prints one row
per workload with the best-of-N time for each backend, the speedup, and
whether the two backends agree to 1e-9.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from rctkit._kernels import compiled, pure

WORKLOADS = {
    "combinations n=20 k=10": ("combination_moments", 20, 10),
    "combinations n=24 k=8": ("combination_moments", 24, 8),
    "batch 2000 x 500": ("batch_moments", 500, 2000),
    "batch 20000 x 100": ("batch_moments", 100, 20000),
}


def make_args(kind, n, m, rng):
    a, b = rng.normal(size=n), rng.normal(size=n)
    if kind == "combination_moments":
        return a, b, m
    base = np.zeros(n, dtype=np.int8)
    base[: n // 2] = 1
    return a, b, rng.permuted(np.tile(base, (m, 1)), axis=1)


def agree(x, y):
    return all(np.allclose(u, v, rtol=1e-9, atol=1e-9) for u, v in zip(x, y))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'workload':<26}{'numpy s':>10}{'cython s':>10}{'speedup':>9}  agree")
    for name, (kind, n, m) in WORKLOADS.items():
        call_args = make_args(kind, n, m, rng)
        f_pure = getattr(pure, kind)
        t_pure = min(timeit.repeat(lambda: f_pure(*call_args), number=1, repeat=args.repeat))
        if compiled is None:
            print(f"{name:<26}{t_pure:>10.4f}{'n/a':>10}{'n/a':>9}  compiled backend not built")
            continue
        f_c = getattr(compiled, kind)
        t_c = min(timeit.repeat(lambda: f_c(*call_args), number=1, repeat=args.repeat))
        ok = agree(f_pure(*call_args), f_c(*call_args))
        print(f"{name:<26}{t_pure:>10.4f}{t_c:>10.4f}{t_pure / t_c:>8.1f}x  {ok}")


if __name__ == "__main__":
    main()
