"""Plain and exponentially weighted Gaussian quadrature.

The weighted rules integrate f(x) * exp(-b (x - 1/2)) on the unit interval
exactly for polynomial f up to degree 2n - 1.  Recurrence coefficients of
the orthogonal polynomials come from the Stieltjes procedure driven by an
oversampled composite Gauss rule (the raw moment matrix would be hopelessly
ill conditioned); nodes and weights then follow from the symmetric
tridiagonal eigenproblem.  Closed-form moments are kept alongside as an
independent cross-check.

Physical-cell rules tensorize the 1d rules per axis with exponent
b = beta_axis * h_axis / alpha and carry the jacobian plus the offset
factor exp(-beta . (center - x_ref) / alpha), so the rule integrates
mu(x) p(x) exactly for the per-cell weight mu.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels

MAX_PLAIN_POINTS = 20
MAX_WEIGHTED_POINTS = 12
MAX_EXPONENT = 200.0

# Largest admissible |log mu| before a weighted rule is refused; keeps the
# globally-anchored weight mode from silently overflowing.
GUARD_EXPONENT = 700.0


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights on the reference interval (0, 1).

    ``exponent`` is the b of the weight exp(-b (x - 1/2)); 0 marks a plain
    rule.  Exact for integrand polynomials of degree <= ``exactness``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    exponent: float
    exactness: int

    @property
    def kind(self) -> str:
        return "plain" if self.exponent == 0.0 else "weighted"


@lru_cache(maxsize=None)
def _leggauss01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_legendre(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule on (0, 1)."""
    if not 1 <= n <= MAX_PLAIN_POINTS:
        raise QuadratureError(f"plain rule supports 1..{MAX_PLAIN_POINTS} points, got {n}")
    x, w = _leggauss01(n)
    return QuadratureRule(nodes=x.copy(), weights=w.copy(), exponent=0.0, exactness=2 * n - 1)


# ---------------------------------------------------------------------------
# analytic moments of the reference weight (self-contained oracle)
# ---------------------------------------------------------------------------

def _centered_power_integrals(n: int, jmax: int):
    """I[n, j] = int_0^1 x^n (x - 1/2)^j dx, computed in extended precision.

    Uses x = (x - 1/2) + 1/2 to step down in n with positive coefficients,
    avoiding the cancellation of the binomial expansion.
    """
    width = jmax + n + 1
    table = np.zeros(width, dtype=np.longdouble)
    for j in range(0, width, 2):
        table[j] = np.longdouble(0.5) ** j / (j + 1)
    for _ in range(n):
        table = table[1:] + np.longdouble(0.5) * table[:-1]
        table = np.append(table, np.longdouble(0.0))
    return table[: jmax + 1]


def analytic_moment(n: int, b: float) -> float:
    """m_n(b) = int_0^1 x^n exp(-b (x - 1/2)) dx.

    Small |b| uses the exponential series against centered-power integrals;
    larger |b| uses the integration-by-parts recurrence
    m_k = (k m_{k-1} - e^{-b/2}) / b, which is stable once |b| dominates k.
    Finite for |b| <= 200 and any moderate n.
    """
    if n < 0:
        raise ValueError("moment degree must be nonnegative")
    if b == 0.0:
        return 1.0 / (n + 1)
    bl = np.longdouble(b)
    if abs(b) < 12.0:
        jmax = 96
        coeffs = _centered_power_integrals(n, jmax)
        total = np.longdouble(0.0)
        term = np.longdouble(1.0)
        for j in range(jmax + 1):
            total += term * coeffs[j]
            term *= -bl / (j + 1)
        return float(total)
    ebh = np.exp(-bl / 2)
    m = (np.exp(bl / 2) - ebh) / bl
    for k in range(1, n + 1):
        m = (k * m - ebh) / bl
    return float(m)


# ---------------------------------------------------------------------------
# weighted Gauss rules
# ---------------------------------------------------------------------------

def _oversample_grid(bmax: float, n: int):
    """Composite plain Gauss sampling grid able to resolve exp(-b x) exactly
    enough for the Stieltjes inner products."""
    panels = max(1, int(math.ceil(bmax / 8.0)))
    npp = max(4 * n, 16)
    x0, w0 = _leggauss01(npp)
    xs = (np.arange(panels)[:, None] + x0[None, :]).ravel() / panels
    ws = np.tile(w0 / panels, panels)
    return xs, ws


def weighted_gauss_batch(bs, n: int):
    """Gauss rules for the weights exp(-b (x - 1/2)), one per entry of ``bs``.

    Returns ``(nodes, weights)`` with shape ``(len(bs), n)``; rows are
    ascending in the node coordinate.
    """
    bs = np.asarray(bs, dtype=np.float64)
    if not 1 <= n <= MAX_WEIGHTED_POINTS:
        raise QuadratureError(f"weighted rule supports 1..{MAX_WEIGHTED_POINTS} points, got {n}")
    if np.any(np.abs(bs) > MAX_EXPONENT):
        raise QuadratureError(f"|b| must not exceed {MAX_EXPONENT}")
    xq, wq = _oversample_grid(float(np.max(np.abs(bs), initial=0.0)), n)
    # Factor out the peak value so sampled weights stay in [0, 1].
    scale_log = 0.5 * np.abs(bs)
    wvals = np.exp(-bs[:, None] * (xq[None, :] - 0.5) - scale_log[:, None])
    alpha, beta = kernels.stieltjes_batch(wvals, xq, wq, n)
    if n > 1 and (not np.all(np.isfinite(beta)) or np.any(beta[:, 1:] <= 0.0)):
        raise QuadratureError("orthogonal-polynomial recurrence broke down (ill-conditioned weight)")
    if n == 1:
        nodes = alpha.copy()
        weights = beta[:, :1] * np.exp(scale_log)[:, None]
        return nodes, weights
    nrows = bs.shape[0]
    jac = np.zeros((nrows, n, n))
    idx = np.arange(n)
    jac[:, idx, idx] = alpha
    off = np.sqrt(beta[:, 1:])
    jac[:, idx[:-1], idx[1:]] = off
    jac[:, idx[1:], idx[:-1]] = off
    evals, evecs = np.linalg.eigh(jac)
    weights = beta[:, :1] * evecs[:, 0, :] ** 2 * np.exp(scale_log)[:, None]
    return evals, weights


@lru_cache(maxsize=65536)
def _weighted_gauss_cached(b: float, n: int) -> QuadratureRule:
    nodes, weights = weighted_gauss_batch(np.array([b]), n)
    return QuadratureRule(nodes=nodes[0], weights=weights[0], exponent=b, exactness=2 * n - 1)


def weighted_gauss(b: float, n: int) -> QuadratureRule:
    """n-point Gauss rule for the weight exp(-b (x - 1/2)) on (0, 1)."""
    b = float(b)
    if b == 0.0:
        return gauss_legendre(n)
    return _weighted_gauss_cached(b, n)


def moment_errors(b: float, n: int):
    """Relative moment errors of the weighted rule vs the closed form.

    Returns a list of (m, relative_error) for m = 0 .. 2n - 1.
    """
    rule = weighted_gauss(b, n)
    rows = []
    for m in range(2 * n):
        approx = float(np.sum(rule.weights * rule.nodes**m))
        exact = analytic_moment(m, b)
        rows.append((m, abs(approx - exact) / abs(exact)))
    return rows


# ---------------------------------------------------------------------------
# physical cell and face rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellRule:
    """Tensor rule on one physical cell, weights folded with mu."""

    ref_points: np.ndarray   # (nq, d) in [0,1]^d
    points: np.ndarray       # (nq, d) physical
    weights: np.ndarray      # (nq,)
    exponents: tuple         # per-axis b = beta_a h_a / alpha


@dataclass(frozen=True)
class FaceRule:
    """Rule on one physical face of a cell.

    ``ref_points`` live in the face's own (d-1)-dimensional reference
    coordinates; ``cell_ref_points`` give the same nodes in the adjacent
    cell's reference coordinates (for trace evaluation of cell bases).
    """

    ref_points: np.ndarray
    cell_ref_points: np.ndarray
    points: np.ndarray
    weights: np.ndarray


def _axis_rule(b: float, n: int, unweighted: bool) -> QuadratureRule:
    if unweighted or b == 0.0:
        return gauss_legendre(n)
    return weighted_gauss(b, n)


def _offset_factor(beta, alpha, point, x_ref, log_scale):
    """exp(-beta . (point - x_ref) / alpha + log_scale) with overflow guard."""
    if x_ref is None:
        expo = log_scale
    else:
        expo = -float(np.dot(beta, point - x_ref)) / alpha + log_scale
    if abs(expo) > GUARD_EXPONENT:
        raise QuadratureError(
            f"weight exponent {expo:.3g} exceeds {GUARD_EXPONENT:.0f}; "
            "anchor the weight at the cell center instead"
        )
    return math.exp(expo)


def cell_rule(beta, alpha, lower, extent, n: int, x_ref=None, log_scale=0.0,
              unweighted=False) -> CellRule:
    """Tensor quadrature on the box ``lower + [0, extent]``.

    Integrates mu(x) p(x) exactly for per-axis degree of p up to 2n - 1,
    where mu = exp(-beta . (x - x_ref) / alpha) (mu = 1 if ``unweighted``).
    ``x_ref = None`` anchors the weight at the cell center.
    """
    beta = np.asarray(beta, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    extent = np.asarray(extent, dtype=np.float64)
    d = lower.shape[0]
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    bs = tuple(0.0 if unweighted else float(beta[a] * extent[a] / alpha) for a in range(d))
    rules = [_axis_rule(bs[a], n, unweighted) for a in range(d)]
    if d == 1:
        ref = rules[0].nodes[:, None]
        w = rules[0].weights * extent[0]
    else:
        rx, ry = rules
        ref = np.column_stack([
            np.repeat(rx.nodes, ry.nodes.shape[0]),
            np.tile(ry.nodes, rx.nodes.shape[0]),
        ])
        w = np.repeat(rx.weights, ry.weights.shape[0]) * np.tile(ry.weights, rx.weights.shape[0])
        w = w * extent[0] * extent[1]
    center = lower + 0.5 * extent
    if not unweighted:
        w = w * _offset_factor(beta, alpha, center, x_ref, log_scale)
    return CellRule(ref_points=ref, points=lower + ref * extent, weights=w, exponents=bs)


def face_rule(beta, alpha, face_lower, face_extent, axis: int, cell_lower, cell_extent,
              n: int, x_ref=None, log_scale=0.0, unweighted=False) -> FaceRule:
    """Quadrature on one face of an axis-aligned cell.

    The tangential directions carry the per-axis weighted rules; the fixed
    normal offset contributes the scalar exp(-beta . (x_face_center -
    x_ref) / alpha) so the rule integrates mu g exactly for polynomial g on
    the face.
    """
    beta = np.asarray(beta, dtype=np.float64)
    face_lower = np.asarray(face_lower, dtype=np.float64)
    face_extent = np.asarray(face_extent, dtype=np.float64)
    cell_lower = np.asarray(cell_lower, dtype=np.float64)
    cell_extent = np.asarray(cell_extent, dtype=np.float64)
    d = cell_lower.shape[0]
    tangents = [a for a in range(d) if a != axis]
    if d == 1:
        ref = np.zeros((1, 0))
        w = np.ones(1)
    else:
        t = tangents[0]
        b_t = 0.0 if unweighted else float(beta[t] * face_extent[t] / alpha)
        r = _axis_rule(b_t, n, unweighted)
        ref = r.nodes[:, None]
        w = r.weights * face_extent[t]
    center = face_lower + 0.5 * face_extent
    if not unweighted:
        anchor = cell_lower + 0.5 * cell_extent if x_ref is None else x_ref
        w = w * _offset_factor(beta, alpha, center, anchor, log_scale)
    nq = ref.shape[0]
    pts = np.tile(face_lower, (nq, 1))
    cell_ref = np.empty((nq, d))
    for col, t in enumerate(tangents):
        pts[:, t] = face_lower[t] + ref[:, col] * face_extent[t]
        cell_ref[:, t] = (pts[:, t] - cell_lower[t]) / cell_extent[t]
    cell_ref[:, axis] = (face_lower[axis] - cell_lower[axis]) / cell_extent[axis]
    return FaceRule(ref_points=ref, cell_ref_points=cell_ref, points=pts, weights=w)
