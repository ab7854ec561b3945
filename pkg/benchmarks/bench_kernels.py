"""Compare the compiled disc-sum kernel against the numpy fallback.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from czlab import _kernels_py
from czlab.kernels import IMPLEMENTATION
from czlab.lattice import disc_halfwidths

try:
    from czlab import _kernels_c
except ImportError:
    _kernels_c = None


def bench(fn, values, hw, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(values, hw)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    rng = np.random.default_rng(0)
    print("active implementation: %s" % IMPLEMENTATION)
    for n, s in ((257, 16), (513, 64), (1025, 256)):
        values = rng.lognormal(0.0, 1.0, (n, n))
        hw = disc_halfwidths(s)
        t_py, out_py = bench(_kernels_py.disc_sum_map, values, hw)
        line = "n=%4d disc_s=%4d  numpy %.4fs" % (n, s, t_py)
        if _kernels_c is not None:
            t_c, out_c = bench(_kernels_c.disc_sum_map, values, hw)
            err = float(np.max(np.abs(out_c - out_py)))
            line += "  compiled %.4fs  speedup %.2fx  max|diff| %g" % (
                t_c, t_py / t_c, err)
        else:
            line += "  (compiled kernel unavailable)"
        print(line)


if __name__ == "__main__":
    main()
