"""Compare the compiled and NumPy kernels on pipeline-sized inputs.

Run with ``python3 benchmarks/bench_kernels.py``.  Each timing is the best
of ``--repeat`` runs.
"""
import argparse
import timeit

import numpy as np

from lossqkd import kernels
from lossqkd.postprocess import LdpcCode


def cases(rng):
    code = LdpcCode.regular(10_000, 0.2, seed=1)
    a = rng.integers(0, 2, code.length).astype(np.uint8)
    b = a ^ (rng.random(code.length) < 0.11).astype(np.uint8)
    p = 0.11
    llr = np.ascontiguousarray((1 - 2.0 * b) * np.log((1 - p) / p))
    syn = code.syndrome(a)
    bp_args = (code.check_ptr, code.edge_var, code.var_ptr, code.var_edges, syn, llr, 50)

    m, n = 10_000, 1_500
    c = rng.integers(0, 2, m + n - 1).astype(np.uint8)
    x = rng.integers(0, 2, m).astype(np.uint8)

    bits = rng.integers(0, 2, 1_000_000).astype(np.uint8)
    return {
        "bp_decode (10k bits, p=0.11)": ("bp_decode", bp_args),
        f"toeplitz_mul ({m} -> {n})": ("toeplitz_mul", (c, x, n)),
        "longest_ones_runs (1e6 bits, M=128)": ("longest_ones_runs", (bits, 128)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = sorted(kernels.BACKENDS)
    print(f"{'kernel':40s}" + "".join(f"{b:>12s}" for b in backends) + f"{'speedup':>10s}")
    for label, (name, fn_args) in cases(rng).items():
        times = {}
        for b in backends:
            fn = getattr(kernels.BACKENDS[b], name)
            times[b] = min(timeit.repeat(lambda: fn(*fn_args), number=1, repeat=args.repeat))
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:40s}" + "".join(f"{times[b] * 1e3:10.2f}ms" for b in backends) + f"{speed:9.1f}x")


if __name__ == "__main__":
    main()
