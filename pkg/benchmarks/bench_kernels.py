"""Time the hot kernels on each available backend.

    python3 benchmarks/bench_kernels.py [--sizes 20 50 100] [--repeat 5]

Prints one JSON object per (kernel, backend, size) with the best time over
``--repeat`` runs, plus the speedup of the compiled backend.
"""

import argparse
import json
import timeit

import numpy as np

from sdtwreg import kernels, wavefront


def best_time(fn, repeat: int) -> float:
    number = 1
    # grow the inner loop until one measurement takes at least 20 ms
    while timeit.timeit(fn, number=number) < 0.02:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 50, 100])
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--gamma", type=float, default=0.1)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    mods = kernels.backends()
    for t in args.sizes:
        x, y = rng.standard_normal((t, args.dim)), rng.standard_normal((t, args.dim))
        D = mods["python"].pairwise_cost(x, y, 0)
        times = {}
        for name, mod in mods.items():
            times["sdtw_value_grad", name] = best_time(lambda: mod.sdtw_value_grad(x, y, args.gamma, 0), args.repeat)
            times["cidm", name] = best_time(lambda: mod.cidm(x, 1, 1.1), args.repeat)
            times["sdtw_forward", name] = best_time(lambda: mod.sdtw_forward(D, args.gamma), args.repeat)
        times["sdtw_forward", "wavefront"] = best_time(lambda: wavefront.sdtw_forward(D, args.gamma), args.repeat)
        for (kernel, backend), sec in times.items():
            row = {"kernel": kernel, "backend": backend, "t": t, "seconds": sec}
            if "cython" in mods and backend != "cython":
                row["cython_speedup"] = sec / times[kernel, "cython"]
            print(json.dumps(row))


if __name__ == "__main__":
    main()
