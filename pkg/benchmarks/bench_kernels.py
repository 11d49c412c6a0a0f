#!/usr/bin/env python3
"""Timing comparison of the numba kernels against the pure-numpy fallbacks.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

The same comparison is what the WHDG_PURE_NUMPY environment flag toggles
package wide.  Numba timings exclude compilation (one warmup call).
"""

import time

import numpy as np

from whdg import kernels

def _time(fn, *args, repeat=7):
    fn(*args)  # warmup / compile
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    cases = []

    x_big = rng.random(200_000)
    cases.append(("legendre_table (200k pts, deg 6)", "legendre_table", (x_big, 6)))
    cases.append(("legendre_table_der (200k pts, deg 6)", "legendre_table_der", (x_big, 6)))

    t_big = rng.uniform(-500, 500, 1_000_000)
    cases.append(("bernoulli (1e6 values)", "bernoulli", (t_big,)))

    xq, wq = np.polynomial.legendre.leggauss(24)
    xq = 0.5 * (xq + 1)
    wq = 0.5 * wq
    bs = rng.uniform(-40, 40, 4096)
    wvals = np.exp(-bs[:, None] * (xq[None, :] - 0.5))
    cases.append(("stieltjes_batch (4096 weights, n=4)", "stieltjes_batch",
                  (wvals, xq, wq, 4)))

    print(f"numba available: {kernels.USING_NUMBA}")
    header = f"{'kernel':42s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>9s}"
    print(header)
    print("-" * len(header))
    for label, name, args in cases:
        t_np = _time(kernels.numpy_impls[name], *args)
        if kernels.USING_NUMBA:
            t_active = _time(kernels.active_impls[name], *args)
            ratio = t_np / t_active if t_active > 0 else float("inf")
            print(f"{label:42s} {1e3 * t_np:12.3f} {1e3 * t_active:12.3f} {ratio:8.2f}x")
        else:
            print(f"{label:42s} {1e3 * t_np:12.3f} {'-':>12s} {'-':>9s}")

    _bench_gram(rng)


def _bench_gram(rng):
    """Why local assembly sticks with einsum: the batched weighted Gram is
    faster through numpy's optimized contraction than through a jit loop."""
    V = rng.standard_normal((25, 9))
    W = rng.standard_normal((25, 9))
    wb = rng.random((4096, 25))

    def gram_np(V, wb, W):
        return np.einsum("qi,rq,qj->rij", V, wb, W, optimize=True)

    t_np = _time(gram_np, V, wb, W)
    line = f"{'weighted gram batch, einsum (4096x25x9)':42s} {1e3 * t_np:12.3f}"
    if kernels.USING_NUMBA:
        from numba import njit

        @njit(cache=True)
        def gram_nb(V, wb, W):
            nrows = wb.shape[0]
            nq, m1 = V.shape
            m2 = W.shape[1]
            out = np.zeros((nrows, m1, m2))
            for r in range(nrows):
                for q in range(nq):
                    wq = wb[r, q]
                    for i in range(m1):
                        vi = V[q, i] * wq
                        for j in range(m2):
                            out[r, i, j] += vi * W[q, j]
            return out

        t_nb = _time(gram_nb, V, wb, W)
        line += f" {1e3 * t_nb:12.3f} {t_np / t_nb:8.2f}x"
    print(line)


if __name__ == "__main__":
    main()
