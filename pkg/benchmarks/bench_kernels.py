"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--sizes 256 1024 4096] [--repeat 3]

Prints best-of-``repeat`` wall time per kernel and backend, the speedup,
and whether both backends returned identical arrays.
"""

import argparse
import timeit

import numpy as np

from graphfuse import kernels


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096])
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--k", type=int, default=8)
    parser.add_argument("--d", type=int, default=3)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled backend unavailable; only numpy timings are shown")
    print(f"{'kernel':<26}{'n':>6}" + "".join(f"{name:>12}" for name in impls)
          + f"{'speedup':>10}{'identical':>11}")
    rng = np.random.default_rng(0)
    for n in args.sizes:
        x = rng.standard_normal((n, args.dim))
        dout = rng.standard_normal((n, args.dim))
        nbrs = kernels.dilated_knn_indices(x, args.k, args.d)
        _, arg = kernels.max_relative(x, nbrs)
        cases = {
            f"dilated_knn k={args.k} d={args.d}": lambda m: kernels.dilated_knn_indices(x, args.k, args.d, impl=m),
            "max_relative": lambda m: kernels.max_relative(x, nbrs, impl=m)[0],
            "max_relative_backward": lambda m: kernels.max_relative_backward(dout, arg, impl=m),
        }
        for label, run in cases.items():
            times = {name: bench(lambda m=m: run(m), args.repeat) for name, m in impls.items()}
            results = [run(m) for m in impls.values()]
            same = all(np.array_equal(results[0], r) for r in results[1:])
            speedup = times["numpy"] / times["cython"] if "cython" in times else float("nan")
            print(f"{label:<26}{n:>6}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values())
                  + f"{speedup:>9.1f}x{str(same):>11}")


if __name__ == "__main__":
    main()
