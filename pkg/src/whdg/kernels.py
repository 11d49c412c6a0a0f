"""Numerical hot-loop kernels with two interchangeable backends.

Every kernel exists twice: a plain numpy implementation and a numba
``@njit`` version.  The numba variants are the default whenever numba
imports cleanly; setting the environment variable ``WHDG_PURE_NUMPY=1``
(before import) forces the numpy path.  Both backends are kept importable
side by side so the test suite can assert parity and the benchmark script
can time them against each other.
"""

import math
import os

import numpy as np

__all__ = [
    "USING_NUMBA",
    "bernoulli",
    "legendre_table",
    "legendre_table_der",
    "stieltjes_batch",
]


def _pure_numpy_requested() -> bool:
    return os.environ.get("WHDG_PURE_NUMPY", "").strip().lower() in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _bernoulli_np(t):
    """B(t) = t / (e^t - 1), evaluated stably for all finite t.

    Series near 0, asymptotic branches for |t| > 500 so the function never
    overflows; B(0) = 1 (removable singularity).  Array-valued; scalar
    callers should go through :func:`whdg.sgfv.bernoulli`.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    out = np.empty_like(t)
    small = np.abs(t) < 1e-4
    big_pos = t > 500.0
    big_neg = t < -500.0
    mid = ~(small | big_pos | big_neg)

    ts = t[small]
    out[small] = 1.0 - ts / 2.0 + ts * ts / 12.0 - ts**4 / 720.0
    out[big_pos] = t[big_pos] * np.exp(-t[big_pos])
    out[big_neg] = -t[big_neg]
    out[mid] = t[mid] / np.expm1(t[mid])
    return out


def _legendre_table_np(x, nmax):
    """Values of the L2(0,1)-orthonormal Legendre family at points ``x``.

    Returns an array of shape ``(len(x), nmax + 1)``; column ``n`` holds
    sqrt(2n+1) * P_n(2x - 1).
    """
    x = np.asarray(x, dtype=np.float64)
    t = 2.0 * x - 1.0
    npts = t.shape[0]
    vals = np.empty((npts, nmax + 1))
    p_prev = np.ones(npts)
    vals[:, 0] = p_prev
    if nmax >= 1:
        p_cur = t.copy()
        vals[:, 1] = math.sqrt(3.0) * p_cur
        for n in range(1, nmax):
            p_next = ((2 * n + 1) * t * p_cur - n * p_prev) / (n + 1)
            vals[:, n + 1] = math.sqrt(2 * n + 3) * p_next
            p_prev, p_cur = p_cur, p_next
    return vals


def _legendre_table_der_np(x, nmax):
    """Like :func:`legendre_table` but also returns d/dx of each member."""
    x = np.asarray(x, dtype=np.float64)
    t = 2.0 * x - 1.0
    npts = t.shape[0]
    vals = np.empty((npts, nmax + 1))
    ders = np.empty((npts, nmax + 1))
    p_prev = np.ones(npts)
    dp_prev = np.zeros(npts)
    vals[:, 0] = p_prev
    ders[:, 0] = 0.0
    if nmax >= 1:
        p_cur = t.copy()
        dp_cur = np.ones(npts)
        vals[:, 1] = math.sqrt(3.0) * p_cur
        ders[:, 1] = math.sqrt(3.0) * 2.0 * dp_cur
        for n in range(1, nmax):
            p_next = ((2 * n + 1) * t * p_cur - n * p_prev) / (n + 1)
            dp_next = dp_prev + (2 * n + 1) * p_cur
            vals[:, n + 1] = math.sqrt(2 * n + 3) * p_next
            ders[:, n + 1] = math.sqrt(2 * n + 3) * 2.0 * dp_next
            p_prev, p_cur = p_cur, p_next
            dp_prev, dp_cur = dp_cur, dp_next
    return vals, ders


def _stieltjes_batch_np(wvals, xq, wq, n):
    """Jacobi recurrence coefficients for many weight functions at once.

    ``wvals`` has shape ``(nrows, nq)``: row ``r`` samples weight function
    ``w_r`` at the shared oversampling nodes ``xq`` (quadrature weights
    ``wq``).  Runs the Stieltjes procedure for monic orthogonal polynomials
    and returns ``(alpha, beta)`` with shapes ``(nrows, n)`` where
    ``beta[:, 0]`` is the zeroth moment of each weight.
    """
    wvals = np.asarray(wvals, dtype=np.float64)
    nrows = wvals.shape[0]
    alpha = np.zeros((nrows, n))
    beta = np.zeros((nrows, n))
    wall = wvals * wq
    pi_prev = np.zeros_like(wvals)
    pi_cur = np.ones_like(wvals)
    norm_prev = np.ones(nrows)
    for j in range(n):
        norm_cur = np.sum(wall * pi_cur * pi_cur, axis=1)
        xmom = np.sum(wall * xq * pi_cur * pi_cur, axis=1)
        alpha[:, j] = xmom / norm_cur
        if j == 0:
            beta[:, 0] = norm_cur
        else:
            beta[:, j] = norm_cur / norm_prev
        pi_next = (xq - alpha[:, j][:, None]) * pi_cur - (
            (beta[:, j] if j > 0 else np.zeros(nrows))[:, None] * pi_prev
        )
        pi_prev, pi_cur = pi_cur, pi_next
        norm_prev = norm_cur
    return alpha, beta


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

USING_NUMBA = False

if not _pure_numpy_requested():
    try:
        from numba import njit

        @njit(cache=True)
        def _bernoulli_nb(t):
            t = np.asarray(t, dtype=np.float64)
            out = np.empty_like(t)
            flat_t = t.ravel()
            flat_o = out.ravel()
            for i in range(flat_t.shape[0]):
                ti = flat_t[i]
                if abs(ti) < 1e-4:
                    flat_o[i] = 1.0 - ti / 2.0 + ti * ti / 12.0 - ti**4 / 720.0
                elif ti > 500.0:
                    flat_o[i] = ti * math.exp(-ti)
                elif ti < -500.0:
                    flat_o[i] = -ti
                else:
                    flat_o[i] = ti / math.expm1(ti)
            return out

        @njit(cache=True)
        def _legendre_table_nb(x, nmax):
            npts = x.shape[0]
            vals = np.empty((npts, nmax + 1))
            for q in range(npts):
                t = 2.0 * x[q] - 1.0
                p_prev = 1.0
                vals[q, 0] = 1.0
                if nmax >= 1:
                    p_cur = t
                    vals[q, 1] = math.sqrt(3.0) * p_cur
                    for n in range(1, nmax):
                        p_next = ((2 * n + 1) * t * p_cur - n * p_prev) / (n + 1)
                        vals[q, n + 1] = math.sqrt(2.0 * n + 3.0) * p_next
                        p_prev = p_cur
                        p_cur = p_next
            return vals

        @njit(cache=True)
        def _legendre_table_der_nb(x, nmax):
            npts = x.shape[0]
            vals = np.empty((npts, nmax + 1))
            ders = np.empty((npts, nmax + 1))
            for q in range(npts):
                t = 2.0 * x[q] - 1.0
                p_prev = 1.0
                dp_prev = 0.0
                vals[q, 0] = 1.0
                ders[q, 0] = 0.0
                if nmax >= 1:
                    p_cur = t
                    dp_cur = 1.0
                    vals[q, 1] = math.sqrt(3.0) * p_cur
                    ders[q, 1] = math.sqrt(3.0) * 2.0
                    for n in range(1, nmax):
                        p_next = ((2 * n + 1) * t * p_cur - n * p_prev) / (n + 1)
                        dp_next = dp_prev + (2 * n + 1) * p_cur
                        vals[q, n + 1] = math.sqrt(2.0 * n + 3.0) * p_next
                        ders[q, n + 1] = math.sqrt(2.0 * n + 3.0) * 2.0 * dp_next
                        p_prev = p_cur
                        p_cur = p_next
                        dp_prev = dp_cur
                        dp_cur = dp_next
            return vals, ders

        @njit(cache=True)
        def _stieltjes_batch_nb(wvals, xq, wq, n):
            nrows, nq = wvals.shape
            alpha = np.zeros((nrows, n))
            beta = np.zeros((nrows, n))
            for r in range(nrows):
                pi_prev = np.zeros(nq)
                pi_cur = np.ones(nq)
                norm_prev = 1.0
                for j in range(n):
                    norm_cur = 0.0
                    xmom = 0.0
                    for q in range(nq):
                        ww = wvals[r, q] * wq[q] * pi_cur[q] * pi_cur[q]
                        norm_cur += ww
                        xmom += xq[q] * ww
                    a = xmom / norm_cur
                    alpha[r, j] = a
                    if j == 0:
                        beta[r, 0] = norm_cur
                        b = 0.0
                    else:
                        b = norm_cur / norm_prev
                        beta[r, j] = b
                    for q in range(nq):
                        nxt = (xq[q] - a) * pi_cur[q] - b * pi_prev[q]
                        pi_prev[q] = pi_cur[q]
                        pi_cur[q] = nxt
                    norm_prev = norm_cur
            return alpha, beta

        USING_NUMBA = True
    except ImportError:
        USING_NUMBA = False


if USING_NUMBA:
    def bernoulli(t):
        return _bernoulli_nb(np.ascontiguousarray(np.atleast_1d(t), dtype=np.float64))

    def legendre_table(x, nmax):
        return _legendre_table_nb(np.ascontiguousarray(x, dtype=np.float64), nmax)

    def legendre_table_der(x, nmax):
        return _legendre_table_der_nb(np.ascontiguousarray(x, dtype=np.float64), nmax)

    def stieltjes_batch(wvals, xq, wq, n):
        return _stieltjes_batch_nb(
            np.ascontiguousarray(wvals, dtype=np.float64),
            np.ascontiguousarray(xq, dtype=np.float64),
            np.ascontiguousarray(wq, dtype=np.float64),
            n,
        )

else:
    bernoulli = _bernoulli_np
    legendre_table = _legendre_table_np
    legendre_table_der = _legendre_table_der_np
    stieltjes_batch = _stieltjes_batch_np


# Always-importable references for parity tests and benchmarks.
numpy_impls = {
    "bernoulli": _bernoulli_np,
    "legendre_table": _legendre_table_np,
    "legendre_table_der": _legendre_table_der_np,
    "stieltjes_batch": _stieltjes_batch_np,
}

active_impls = {
    "bernoulli": bernoulli,
    "legendre_table": legendre_table,
    "legendre_table_der": legendre_table_der,
    "stieltjes_batch": stieltjes_batch,
}
