"""Tensor-product polynomial bases on the reference cell [0,1]^d.

Scalar spaces use products of L2(0,1)-orthonormal Legendre polynomials, so
the reference mass matrix is the identity and weighted mass matrices stay
well conditioned even for strong exponential weights.  The vector-valued
Raviart-Thomas family on the reference square (degree k+1 along the own
axis, k across) backs the H(div) flux reconstruction.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels

_EPS = 1e-12


def _check_points(points, d):
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] != d:
        raise ValueError(f"expected points with {d} coordinates, got shape {pts.shape}")
    if np.any(pts < -_EPS) or np.any(pts > 1.0 + _EPS):
        raise ValueError("points outside the reference cell")
    return pts


@dataclass(frozen=True)
class TensorBasis:
    """Orthonormal tensor Legendre basis of per-axis degree <= k.

    Members are ordered lexicographically in the per-axis degree
    multi-index, first axis most significant.
    """

    degree: int
    dim: int

    def __post_init__(self):
        if self.degree < 0 or self.dim not in (1, 2):
            raise ValueError("degree must be >= 0 and dim in {1, 2}")

    @property
    def size(self) -> int:
        return (self.degree + 1) ** self.dim

    @cached_property
    def exponents(self) -> np.ndarray:
        """(size, dim) array of per-axis degrees, lexicographic order."""
        k = self.degree
        if self.dim == 1:
            return np.arange(k + 1)[:, None]
        i0, i1 = np.divmod(np.arange((k + 1) ** 2), k + 1)
        return np.column_stack([i0, i1])

    def eval(self, points) -> np.ndarray:
        """Basis values at reference points; shape (npts, size)."""
        pts = _check_points(points, self.dim)
        k = self.degree
        tabs = [kernels.legendre_table(pts[:, a], k) for a in range(self.dim)]
        if self.dim == 1:
            return tabs[0]
        return np.einsum("qi,qj->qij", tabs[0], tabs[1]).reshape(pts.shape[0], -1)

    def eval_grad(self, points) -> np.ndarray:
        """Reference-coordinate gradients; shape (npts, size, dim)."""
        pts = _check_points(points, self.dim)
        k = self.degree
        vals, ders = zip(*(kernels.legendre_table_der(pts[:, a], k) for a in range(self.dim)))
        npts = pts.shape[0]
        out = np.empty((npts, self.size, self.dim))
        if self.dim == 1:
            out[:, :, 0] = ders[0]
            return out
        out[:, :, 0] = np.einsum("qi,qj->qij", ders[0], vals[1]).reshape(npts, -1)
        out[:, :, 1] = np.einsum("qi,qj->qij", vals[0], ders[1]).reshape(npts, -1)
        return out


@dataclass(frozen=True)
class RTBasis:
    """Raviart-Thomas flux space on the reference cell.

    In 1d this is the scalar space P_{k+1}; in 2d the pair
    Q_{k+1,k} x Q_{k,k+1}, with all x-component members listed before the
    y-component ones.  Normal traces on reference faces have degree <= k in
    the face variable and the (suitably scaled) divergence lies in Q_k.
    """

    degree: int
    dim: int

    def __post_init__(self):
        if self.degree < 0 or self.dim not in (1, 2):
            raise ValueError("degree must be >= 0 and dim in {1, 2}")

    @property
    def size(self) -> int:
        k = self.degree
        if self.dim == 1:
            return k + 2
        return 2 * (k + 1) * (k + 2)

    @cached_property
    def component_exponents(self):
        """Per component: (ncomp_members, dim) exponent arrays."""
        k = self.degree
        if self.dim == 1:
            return [np.arange(k + 2)[:, None]]
        ex_x = np.column_stack(
            [np.repeat(np.arange(k + 2), k + 1), np.tile(np.arange(k + 1), k + 2)]
        )
        ex_y = np.column_stack(
            [np.repeat(np.arange(k + 1), k + 2), np.tile(np.arange(k + 2), k + 1)]
        )
        return [ex_x, ex_y]

    def eval(self, points) -> np.ndarray:
        """Vector values at reference points; shape (npts, size, dim)."""
        pts = _check_points(points, self.dim)
        npts = pts.shape[0]
        out = np.zeros((npts, self.size, self.dim))
        offset = 0
        for comp, ex in enumerate(self.component_exponents):
            tabs = [kernels.legendre_table(pts[:, a], int(ex[:, a].max())) for a in range(self.dim)]
            block = np.ones((npts, ex.shape[0]))
            for a in range(self.dim):
                block = block * tabs[a][:, ex[:, a]]
            out[:, offset:offset + ex.shape[0], comp] = block
            offset += ex.shape[0]
        return out

    def eval_div_parts(self, points) -> np.ndarray:
        """d(own component)/d(own axis) per member; shape (npts, size, dim).

        Entry [:, i, c] is the reference derivative along axis c of the
        c-component of member i (zero for the components a member does not
        carry).  The physical divergence is the 1/h_c-weighted sum over c.
        """
        pts = _check_points(points, self.dim)
        npts = pts.shape[0]
        out = np.zeros((npts, self.size, self.dim))
        offset = 0
        for comp, ex in enumerate(self.component_exponents):
            kmax = int(ex.max())
            vals_ders = [kernels.legendre_table_der(pts[:, a], kmax) for a in range(self.dim)]
            block = np.ones((npts, ex.shape[0]))
            for a in range(self.dim):
                tab = vals_ders[a][1] if a == comp else vals_ders[a][0]
                block = block * tab[:, ex[:, a]]
            out[:, offset:offset + ex.shape[0], comp] = block
            offset += ex.shape[0]
        return out
