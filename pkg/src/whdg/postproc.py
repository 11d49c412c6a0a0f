"""Superconvergent postprocessing of the hybrid solution.

Three element-local reconstructions of the scalar field and one for the
flux:

* ``l2min_postprocess``: degree-(k+1) gradient fit.  Minimizes
  || alpha grad U* - beta U + J ||_{L2(K)} subject to the cell mean of U*
  matching the mean of U (the constant mode is otherwise free).
* ``flux_reconstruction``: projection of (J, Jhat) into the per-cell
  Raviart-Thomas space; normal moments take the single-valued numerical
  flux, interior moments take J.  The result is H(div)-conforming.
* ``local_resolve``: re-solves the weighted local problem at degree k+1
  with the reconstructed flux driving the data (its divergence as source,
  its normal trace as flux boundary condition), mean-pinned to U.
* ``trace_linear_1d``: continuous piecewise-linear interpolant through
  nodal samples (finite-volume midpoint values or trace values), constant
  beyond the outermost samples.

Mean constraints are enforced by a bordered multiplier row, which with
orthonormal bases touches a single coefficient.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import wquad
from .core import (ProblemSpec, Solution, SolveError, WeightMode,
                   _weight_anchors)
from .meshgen import Mesh
from .polyspace import RTBasis, TensorBasis

TAG_L2MIN = "L2Min"
TAG_FLUXRECON = "FluxRecon"
TAG_LOCALRESOLVE = "LocalResolve"
TAG_TRACELINEAR = "TraceLinear"


@dataclass
class PostField:
    """Per-cell coefficients of a postprocessed field."""

    coeffs: np.ndarray
    degree: int
    tag: str


def _geometry_groups(sol: Solution, spec: ProblemSpec):
    """Cells bucketed by congruent geometry/coefficient data."""
    mesh, config = sol.mesh, sol.config
    beta = spec.beta_per_cell(mesh)
    tau = config.tau_per_face(mesh)
    anchors, log_scales = _weight_anchors(mesh, beta, config, spec.alpha)
    centers = mesh.cell_center()
    groups: dict = {}
    for c in range(mesh.n_cells):
        slots = mesh.cell_faces[c]
        anchor = anchors[c]
        offset = None if anchor is None else (np.asarray(anchor) - centers[c]).tobytes()
        key = (mesh.cell_extent[c].tobytes(), beta[c].tobytes(), tau[slots].tobytes(),
               offset, float(log_scales[c]))
        groups.setdefault(key, []).append(c)
    return [(np.asarray(cells, dtype=np.int64), anchors, log_scales)
            for cells in groups.values()], beta, tau


# ---------------------------------------------------------------------------
# gradient-fit postprocessing
# ---------------------------------------------------------------------------

def l2min_postprocess(sol: Solution, spec: ProblemSpec) -> PostField:
    """Degree-(k+1) local gradient fit with mean matching."""
    mesh, config = sol.mesh, sol.config
    d, k = mesh.dim, config.degree
    basis_k = TensorBasis(k, d)
    basis_p = TensorBasis(k + 1, d)
    m_p = basis_p.size
    out = np.empty((mesh.n_cells, m_p))
    groups, beta, _ = _geometry_groups(sol, spec)
    for cells, _, _ in groups:
        c0 = int(cells[0])
        extent = mesh.cell_extent[c0]
        rule = wquad.cell_rule(np.zeros(d), 1.0, mesh.cell_lower[c0], extent,
                               k + 3, unweighted=True)
        w = rule.weights
        Gp = basis_p.eval_grad(rule.ref_points) / extent[None, None, :]
        S = np.einsum("qia,q,qja->ij", Gp, spec.alpha * w, Gp)
        measure = float(np.prod(extent))
        nb = m_p + 1
        M = np.zeros((nb, nb))
        M[:m_p, :m_p] = S
        M[m_p, 0] = measure   # mean row touches only the constant mode
        M[0, m_p] = measure
        lu = sla.lu_factor(M)

        Vk = basis_k.eval(rule.ref_points)
        uq = sol.U[cells] @ Vk.T                          # (nc, nq)
        jq = np.einsum("cdm,qm->cdq", sol.J[cells], Vk)   # (nc, d, nq)
        target = beta[cells][:, :, None] * uq[:, None, :] - jq
        rhs = np.zeros((cells.shape[0], nb))
        rhs[:, :m_p] = np.einsum("cdq,q,qid->ci", target, w, Gp)
        rhs[:, m_p] = measure * sol.U[cells, 0]
        z = sla.lu_solve(lu, rhs.T).T
        out[cells] = z[:, :m_p]
    return PostField(coeffs=out, degree=k + 1, tag=TAG_L2MIN)


# ---------------------------------------------------------------------------
# H(div) flux reconstruction
# ---------------------------------------------------------------------------

def _interior_test_exponents(k: int, d: int):
    """Anisotropic interior test spaces of the Raviart-Thomas projection:
    degree <= k-1 along the member's own axis, <= k across."""
    if k == 0:
        return [np.zeros((0, d), dtype=np.int64) for _ in range(d)]
    if d == 1:
        return [np.arange(k)[:, None]]
    ex_x = np.column_stack([np.repeat(np.arange(k), k + 1), np.tile(np.arange(k + 1), k)])
    ex_y = np.column_stack([np.repeat(np.arange(k + 1), k), np.tile(np.arange(k), k + 1)])
    return [ex_x, ex_y]


def flux_reconstruction(sol: Solution, spec: ProblemSpec) -> PostField:
    """Project (J, Jhat) into the Raviart-Thomas space, cell by cell."""
    mesh, config = sol.mesh, sol.config
    d, k = mesh.dim, config.degree
    basis_k = TensorBasis(k, d)
    fbasis = TensorBasis(k, 1) if d == 2 else None
    rt = RTBasis(k, d)
    nrt = rt.size
    mf = (k + 1) ** (d - 1)
    out = np.empty((mesh.n_cells, nrt))
    groups, beta, tau = _geometry_groups(sol, spec)
    interior_ex = _interior_test_exponents(k, d)

    for cells, _, _ in groups:
        c0 = int(cells[0])
        lower, extent = mesh.cell_lower[c0], mesh.cell_extent[c0]
        slots = mesh.cell_faces[c0]
        nq = k + 3

        D = np.zeros((nrt, nrt))
        rhs = np.zeros((cells.shape[0], nrt))
        row = 0
        face_tabs = []
        for s, fid in enumerate(slots):
            ax = int(mesh.face_axis[fid])
            sign = mesh.orientation(c0, fid)
            fr = wquad.face_rule(np.zeros(d), 1.0, mesh.face_lower[fid], mesh.face_extent[fid],
                                 ax, lower, extent, nq, unweighted=True)
            Ff = fbasis.eval(fr.ref_points) if d == 2 else np.ones((1, 1))
            RTf = rt.eval(fr.cell_ref_points)[:, :, ax]
            D[row:row + mf, :] = sign * np.einsum("qi,q,qj->ij", Ff, fr.weights, RTf)
            face_tabs.append((s, fid, ax, sign, fr, Ff))
            row += mf

        crule = wquad.cell_rule(np.zeros(d), 1.0, lower, extent, nq, unweighted=True)
        RTv = rt.eval(crule.ref_points)
        Vk = basis_k.eval(crule.ref_points)
        test_tabs = []
        for comp in range(d):
            ex = interior_ex[comp]
            if ex.shape[0] == 0:
                test_tabs.append(None)
                continue
            from . import kernels
            tabs = [kernels.legendre_table(crule.ref_points[:, a], int(ex[:, a].max()))
                    for a in range(d)]
            T = np.ones((crule.ref_points.shape[0], ex.shape[0]))
            for a in range(d):
                T = T * tabs[a][:, ex[:, a]]
            D[row:row + ex.shape[0], :] = np.einsum(
                "qi,q,qj->ij", T, crule.weights, RTv[:, :, comp])
            test_tabs.append((row, T))
            row += ex.shape[0]
        if row != nrt:
            raise SolveError("flux-reconstruction moment count mismatch")
        lu = sla.lu_factor(D)

        # numerical-flux moments per face, batched over the group's cells
        row = 0
        for s, fid_ref, ax, sign_ref, fr, Ff in face_tabs:
            fids = mesh.cell_faces[cells][:, s]
            Vf = basis_k.eval(fr.cell_ref_points)
            ff_t = Ff if d == 2 else np.ones((1, 1))
            jn = sign_ref * np.einsum("cm,qm->cq", sol.J[cells][:, ax, :], Vf)
            uval = sol.U[cells] @ Vf.T
            uhat = sol.Uhat[fids] @ ff_t.T
            jhat = jn + tau[fids][:, None] * (uval - uhat)   # outward numerical flux
            rhs[:, row:row + mf] = np.einsum("qi,q,cq->ci", ff_t, fr.weights, jhat)
            row += mf
        for comp in range(d):
            tt = test_tabs[comp]
            if tt is None:
                continue
            r0, T = tt
            jq = np.einsum("cm,qm->cq", sol.J[cells][:, comp, :], Vk)
            rhs[:, r0:r0 + T.shape[1]] = np.einsum("qi,q,cq->ci", T, crule.weights, jq)

        out[cells] = sla.lu_solve(lu, rhs.T).T
    return PostField(coeffs=out, degree=k, tag=TAG_FLUXRECON)


def eval_rt(mesh: Mesh, field: PostField, ref_points: np.ndarray, cells=None):
    """Values (n_cells, d, nq) of a Raviart-Thomas field at reference points."""
    rt = RTBasis(field.degree, mesh.dim)
    tab = rt.eval(ref_points)
    coeffs = field.coeffs if cells is None else field.coeffs[cells]
    return np.einsum("cn,qnd->cdq", coeffs, tab)


def eval_rt_div(mesh: Mesh, field: PostField, ref_points: np.ndarray, cells=None):
    """Physical divergence values (n_cells, nq) of a Raviart-Thomas field."""
    rt = RTBasis(field.degree, mesh.dim)
    parts = rt.eval_div_parts(ref_points)            # (nq, nrt, d)
    extent = mesh.cell_extent if cells is None else mesh.cell_extent[cells]
    coeffs = field.coeffs if cells is None else field.coeffs[cells]
    scaled = np.einsum("qnd,cd->cqn", parts, 1.0 / extent)
    return np.einsum("cn,cqn->cq", coeffs, scaled)


# ---------------------------------------------------------------------------
# degree-(k+1) local re-solve
# ---------------------------------------------------------------------------

def local_resolve(sol: Solution, spec: ProblemSpec, jdiv: PostField) -> PostField:
    """Re-solve the local hybrid problem at degree k+1 driven by the
    reconstructed flux; mean-pinned to the computed U."""
    mesh, config = sol.mesh, sol.config
    d, k = mesh.dim, config.degree
    kp = k + 1
    unweighted = config.weight_mode == WeightMode.UNWEIGHTED
    basis_p = TensorBasis(kp, d)
    fbasis_p = TensorBasis(kp, 1) if d == 2 else None
    rt = RTBasis(k, d)
    m = basis_p.size
    mf = (kp + 1) ** (d - 1)
    nQ = d * m
    nloc = nQ + m
    nF = 2 * d * mf
    nb = nloc + nF + 1
    out = np.empty((mesh.n_cells, m))
    groups, beta_cells, tau = _geometry_groups(sol, spec)
    alpha = spec.alpha
    nq = k + 4

    for cells, anchors, log_scales in groups:
        c0 = int(cells[0])
        lower, extent = mesh.cell_lower[c0], mesh.cell_extent[c0]
        slots = mesh.cell_faces[c0]
        beta_c = beta_cells[c0]
        anchor, log_scale = anchors[c0], log_scales[c0]

        crule = wquad.cell_rule(beta_c, alpha, lower, extent, nq,
                                x_ref=anchor, log_scale=log_scale, unweighted=unweighted)
        V = basis_p.eval(crule.ref_points)
        G = basis_p.eval_grad(crule.ref_points) / extent[None, None, :]
        w = crule.weights
        Mw = np.einsum("qi,q,qj->ij", V, w, V)
        M1 = [np.einsum("qi,q,qj->ij", G[:, :, c], w, V) for c in range(d)]

        M = np.zeros((nb, nb))
        for c in range(d):
            M[c * m:(c + 1) * m, c * m:(c + 1) * m] = Mw
            M[c * m:(c + 1) * m, nQ:nloc] += -alpha * M1[c]
            M[nQ:nloc, c * m:(c + 1) * m] += -M1[c]
            if unweighted:
                M[c * m:(c + 1) * m, nQ:nloc] += -beta_c[c] * Mw
            else:
                M[nQ:nloc, c * m:(c + 1) * m] += (beta_c[c] / alpha) * Mw

        face_data = []
        for s, fid in enumerate(slots):
            ax = int(mesh.face_axis[fid])
            sign = mesh.orientation(c0, fid)
            t = tau[fid]
            wfr = wquad.face_rule(beta_c, alpha, mesh.face_lower[fid], mesh.face_extent[fid],
                                  ax, lower, extent, nq, x_ref=anchor,
                                  log_scale=log_scale, unweighted=unweighted)
            pfr = wquad.face_rule(np.zeros(d), 1.0, mesh.face_lower[fid],
                                  mesh.face_extent[fid], ax, lower, extent, nq,
                                  unweighted=True)
            Vf = basis_p.eval(wfr.cell_ref_points)
            Ff = fbasis_p.eval(wfr.ref_points) if d == 2 else np.ones((1, 1))
            VwV = np.einsum("qi,q,qj->ij", Vf, wfr.weights, Vf)
            VwF = np.einsum("qi,q,qj->ij", Vf, wfr.weights, Ff)
            cols = slice(nloc + s * mf, nloc + (s + 1) * mf)
            M[ax * m:(ax + 1) * m, cols] += alpha * sign * VwF
            M[nQ:nloc, ax * m:(ax + 1) * m] += sign * VwV
            M[nQ:nloc, nQ:nloc] += t * VwV
            M[nQ:nloc, cols] += -t * VwF

            Vp = basis_p.eval(pfr.cell_ref_points)
            Fp = fbasis_p.eval(pfr.ref_points) if d == 2 else np.ones((1, 1))
            rows = slice(nloc + s * mf, nloc + (s + 1) * mf)
            FpV = np.einsum("qi,q,qj->ij", Fp, pfr.weights, Vp)
            M[rows, ax * m:(ax + 1) * m] += sign * FpV
            M[rows, nQ:nloc] += t * FpV
            M[rows, cols] += -t * np.einsum("qi,q,qj->ij", Fp, pfr.weights, Fp)
            face_data.append((s, ax, sign, pfr, Fp))

        measure = float(np.prod(extent))
        M[nQ, nb - 1] = measure          # multiplier enters the constant-test row
        M[nb - 1, nQ] = measure          # mean constraint on the constant mode
        try:
            lu = sla.lu_factor(M)
        except np.linalg.LinAlgError as exc:
            raise SolveError(
                f"singular augmented re-solve system on cell {c0} "
                f"(condition estimate {np.linalg.cond(M):.3g})") from exc

        rhs = np.zeros((cells.shape[0], nb))
        divvals = eval_rt_div(mesh, jdiv, crule.ref_points, cells=cells)
        rhs[:, nQ:nloc] = np.einsum("cq,q,qi->ci", divvals, w, V)
        for s, ax, sign, pfr, Fp in face_data:
            tab = rt.eval(pfr.cell_ref_points)[:, :, ax]
            jn = sign * (jdiv.coeffs[cells] @ tab.T)
            rows = slice(nloc + s * mf, nloc + (s + 1) * mf)
            rhs[:, rows] = np.einsum("qi,q,cq->ci", Fp, pfr.weights, jn)
        rhs[:, nb - 1] = measure * sol.U[cells, 0]

        z = sla.lu_solve(lu, rhs.T).T
        out[cells] = z[:, nQ:nloc]
    return PostField(coeffs=out, degree=kp, tag=TAG_LOCALRESOLVE)


# ---------------------------------------------------------------------------
# piecewise-linear trace interpolant (1d)
# ---------------------------------------------------------------------------

@dataclass
class PiecewiseLinear1D:
    """Continuous piecewise-linear interpolant, constant outside the samples."""

    xs: np.ndarray
    ys: np.ndarray

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=np.float64), self.xs, self.ys)


def trace_linear_1d(xs, values) -> PiecewiseLinear1D:
    """Interpolant through (x, value) samples; needs at least two of them.

    Finite-volume callers pass cell midpoints with cell values, hybrid
    callers pass face positions with trace values.
    """
    xs = np.asarray(xs, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if xs.shape[0] < 2 or xs.shape != values.shape:
        raise ValueError("need at least two samples with matching shapes")
    order = np.argsort(xs)
    return PiecewiseLinear1D(xs=xs[order], ys=values[order])


def dump_postfields(fields, path) -> None:
    """CSV dump: one row per cell per field, provenance tag included."""
    with open(path, "w") as fh:
        fh.write("tag,degree,cell,coefficients...\n")
        for field in fields:
            for c in range(field.coeffs.shape[0]):
                coeffs = ",".join(f"{v:.16g}" for v in np.ravel(field.coeffs[c]))
                fh.write(f"{field.tag},{field.degree},{c},{coeffs}\n")
