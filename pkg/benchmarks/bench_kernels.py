"""Timing comparison of the belief-propagation decoder backends.

The flooding sum-product update is the package's hot loop: every decode
touches n*3 edges per iteration, 50 iterations per failed block.  This
script times the numba kernel against the pure-numpy fallback on identical
inputs and prints one row per (code length, channel quality) cell.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from fadekey import _kernels
from fadekey._bits import BitString
from fadekey.reconcile import decode_syndrome, ldpc_generate, syndrome


def _bsc_llrs(x, flip_p, rng):
    """Channel LLRs for Alice's bits observed through a BSC(flip_p)."""
    flips = rng.random(x.size) < flip_p
    y = x ^ flips
    mag = np.log((1.0 - flip_p) / flip_p)
    return mag * (1.0 - 2.0 * y.astype(np.float64))


def bench_case(code, flip_p, repeats, seed):
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(repeats):
        x = rng.integers(0, 2, size=code.n).astype(np.uint8)
        s = syndrome(code, BitString(x))
        cases.append((s, _bsc_llrs(x, flip_p, rng)))

    timings = {}
    for backend in ("numba", "numpy"):
        if backend == "numba" and not _kernels.HAVE_NUMBA:
            timings[backend] = (float("nan"), 0)
            continue
        _kernels.set_backend(backend)
        decode_syndrome(code, *cases[0][:1], cases[0][1])  # warm-up (JIT compile)
        t0 = time.perf_counter()
        iters = 0
        for s, llr in cases:
            res = decode_syndrome(code, s, llr)
            iters += max(res.iterations, 1)
        timings[backend] = (time.perf_counter() - t0, iters)
    return timings


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5, help="blocks per cell")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"numba available: {_kernels.HAVE_NUMBA}")
    print(f"{'n':>6} {'flip_p':>7} {'backend':>8} {'total_s':>9} {'ms/iter':>9} {'speedup':>8}")
    for n in (400, 4096):
        code = ldpc_generate(n, seed=n)
        for flip_p in (0.02, 0.08):  # easy converge vs. iteration-limit grind
            timings = bench_case(code, flip_p, args.repeats, args.seed)
            base = timings["numpy"]
            for backend in ("numba", "numpy"):
                total, iters = timings[backend]
                if not np.isfinite(total):
                    print(f"{n:>6} {flip_p:>7} {backend:>8} {'n/a':>9}")
                    continue
                speedup = base[0] / total if total > 0 else float("inf")
                print(f"{n:>6} {flip_p:>7} {backend:>8} {total:>9.3f} "
                      f"{1000.0 * total / iters:>9.3f} {speedup:>7.1f}x")


if __name__ == "__main__":
    main()
