"""Hybridizable DG solver with exponentially weighted local products.

The local mixed system on every cell couples the flux unknown J, the
scalar U and the single-valued face trace Uhat through the numerical flux
Jhat = J + tau (U - Uhat) n.  In the weighted modes every volume/boundary
product of the local equations carries the per-cell weight

    mu_K(x) = exp(-beta_K . (x - x_K) / alpha),

which absorbs the drift term from the local operators (the discrete analog
of switching to Slotboom variables while keeping the primal unknown).  The
unweighted mode is the classical HDG baseline where the drift term stays
in the flux equation.

Static condensation eliminates (J, U) cell by cell, leaving a sparse
system over the face traces on interior and Neumann faces; Dirichlet
traces are L2 projections of the boundary datum and are folded into the
right-hand side.  All per-cell work is independent cell to cell; cells
with congruent geometry/coefficients share one factorized operator and
their contributions are accumulated in a fixed face order, so assembled
systems are bit-reproducible across runs.

Flux balance across interior faces is imposed against plain face test
functions, except in the globally-anchored / chained weight modes where
the weight is continuous across faces and weighting the balance rows
makes the negated trace matrix symmetric positive semidefinite.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import wquad
from .meshgen import DIRICHLET, INTERIOR, NEUMANN, Mesh
from .polyspace import TensorBasis

log = logging.getLogger("whdg")


class SolveError(RuntimeError):
    pass


class WeightMode(Enum):
    """How the per-cell weight anchor x_K is chosen.

    CENTERED: x_K = cell center (default; exponents stay O(beta h / alpha)).
    GLOBAL:   x_K = origin for every cell; the weight is globally continuous
              whenever beta is the gradient of a continuous piecewise-linear
              potential, making the trace system symmetric.  Guarded against
              exponent overflow.
    UNWEIGHTED: mu = 1; classical HDG.
    CHAINED:  1d only; x_K chained so the weight is continuous at every
              node even for discontinuous beta.
    """

    CENTERED = "centered"
    GLOBAL = "global"
    UNWEIGHTED = "unweighted"
    CHAINED = "chained"


@dataclass
class ProblemSpec:
    """Coefficients and data of the drift-diffusion problem.

    ``beta`` is a constant vector or an (n_cells, d) array of per-cell
    constant drifts.  ``f``, ``g_dirichlet`` and ``g_neumann`` are either
    constants or vectorized callables of an (n, d) coordinate array.
    """

    alpha: float
    beta: object
    f: object = None
    g_dirichlet: object = 0.0
    g_neumann: object = 0.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    def beta_per_cell(self, mesh: Mesh) -> np.ndarray:
        b = np.asarray(self.beta, dtype=np.float64)
        if b.ndim <= 1:
            return np.broadcast_to(np.atleast_1d(b), (mesh.n_cells, mesh.dim)).copy()
        if b.shape != (mesh.n_cells, mesh.dim):
            raise ValueError(f"beta shape {b.shape} does not match mesh")
        return b


def _evaluate(data, points):
    if callable(data):
        return np.asarray(data(points), dtype=np.float64)
    return np.full(points.shape[0], float(data))


@dataclass
class SolverConfig:
    degree: int = 1
    tau: object = 1.0
    weight_mode: WeightMode = WeightMode.CENTERED
    chain_seed: float | None = None
    residual_tol: float = 1e-12
    cond_limit: float = 1e14
    # Optional per-cell override of the weight anchor points (n_cells, d);
    # only honored in CENTERED mode, where it exercises the rescaling
    # invariance of the local problems.
    anchor_override: np.ndarray | None = None

    def tau_per_face(self, mesh: Mesh) -> np.ndarray:
        t = np.asarray(self.tau, dtype=np.float64)
        if t.ndim == 0:
            t = np.full(mesh.n_faces, float(t))
        if t.shape != (mesh.n_faces,):
            raise ValueError("tau must be scalar or one value per face")
        if np.any(t < 0):
            raise ValueError("tau must be nonnegative")
        return t


@dataclass
class LocalSystem:
    """Condensed view of one cell's local problem.

    ``matrix`` realizes the (J, U) equations; ``rhs_face`` maps trace
    coefficients on the cell boundary into the local right-hand side and
    ``flux_map`` / ``flux_faceface`` produce the moments of the numerical
    flux against the transmission-side face tests.
    """

    cell: int
    matrix: np.ndarray
    lu: tuple
    rhs_face: np.ndarray
    flux_map: np.ndarray
    flux_faceface: np.ndarray
    volume_values: np.ndarray
    quad_weights: np.ndarray
    phys_points: np.ndarray
    cond_estimate: float
    face_slots: np.ndarray  # face ids in local slot order


@dataclass
class TraceSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    face_dof_start: np.ndarray  # -1 for Dirichlet faces
    dirichlet_coeffs: np.ndarray  # (n_faces, mf); zero on non-Dirichlet faces
    n_dofs: int
    dofs_per_face: int


@dataclass
class Solution:
    mesh: Mesh
    config: SolverConfig
    U: np.ndarray          # (n_cells, m)
    J: np.ndarray          # (n_cells, d, m)
    Uhat: np.ndarray       # (n_faces, mf)
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

def chain_xk_1d(node_positions, beta_cells, alpha, x_seed):
    """Anchor points making the cell weights globally continuous in 1d.

    ``node_positions`` are the n+1 grid nodes, ``beta_cells`` the n per-cell
    drifts.  Matching beta_i (x_i - x_{K_i}) = beta_{i+1} (x_i - x_{K_{i+1}})
    at every interior node propagates the weight value from the seeded
    first cell.  Cells with beta = 0 cannot tilt the weight; they carry the
    incoming nodal value as a constant scale and are reported in ``flagged``.

    Returns ``(anchors, log_scales, flagged)``.
    """
    x = np.asarray(node_positions, dtype=np.float64)
    beta = np.asarray(beta_cells, dtype=np.float64)
    n = beta.shape[0]
    anchors = np.empty(n)
    log_scales = np.zeros(n)
    flagged = []
    log_v = None  # log of mu at the left node of the current cell
    for i in range(n):
        left = x[i]
        if i == 0:
            if beta[0] == 0.0:
                anchors[0] = 0.5 * (x[0] + x[1])
                flagged.append(0)
                log_v = 0.0
            else:
                anchors[0] = float(x_seed)
                log_v = -beta[0] * (left - anchors[0]) / alpha
        if beta[i] == 0.0:
            anchors[i] = 0.5 * (x[i] + x[i + 1])
            log_scales[i] = log_v
            if i > 0:
                flagged.append(i)
            # constant weight: nodal value unchanged at the right node
        else:
            if i > 0 or beta[0] == 0.0:
                anchors[i] = left + alpha * log_v / beta[i]
            log_v = -beta[i] * (x[i + 1] - anchors[i]) / alpha + log_scales[i]
    return anchors, log_scales, flagged


def _weight_anchors(mesh, beta, config, alpha):
    """Per-cell (anchor, log_scale) pairs; anchor None means cell center."""
    mode = config.weight_mode
    n = mesh.n_cells
    if mode == WeightMode.UNWEIGHTED:
        return [None] * n, np.zeros(n)
    if mode == WeightMode.CENTERED:
        if config.anchor_override is not None:
            return list(np.asarray(config.anchor_override, dtype=np.float64)), np.zeros(n)
        return [None] * n, np.zeros(n)
    if mode == WeightMode.GLOBAL:
        return [np.zeros(mesh.dim)] * n, np.zeros(n)
    if mode == WeightMode.CHAINED:
        if mesh.dim != 1:
            raise ValueError("chained weights are a 1d construction")
        nodes = np.concatenate([mesh.cell_lower[:, 0], mesh.cell_lower[-1:, 0] + mesh.cell_extent[-1:, 0]])
        seed = config.chain_seed
        if seed is None:
            seed = float(mesh.cell_lower[0, 0] + 0.5 * mesh.cell_extent[0, 0])
        anchors, log_scales, _ = chain_xk_1d(nodes, beta[:, 0], alpha, seed)
        return [np.array([a]) for a in anchors], log_scales
    raise ValueError(f"unknown weight mode {mode}")


def local_weight(mesh: Mesh, cell: int, x, spec: ProblemSpec, config: SolverConfig) -> float:
    """Value of the cell weight mu_K at a physical point of the cell."""
    x = np.asarray(x, dtype=np.float64)
    lo = mesh.cell_lower[cell]
    hi = lo + mesh.cell_extent[cell]
    if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
        raise ValueError("point outside the cell closure")
    if config.weight_mode == WeightMode.UNWEIGHTED:
        return 1.0
    beta = spec.beta_per_cell(mesh)
    anchors, log_scales = _weight_anchors(mesh, beta, config, spec.alpha)
    anchor = anchors[cell]
    if anchor is None:
        anchor = mesh.cell_center()[cell]
    expo = -float(np.dot(beta[cell], x - anchor)) / spec.alpha + log_scales[cell]
    if abs(expo) > wquad.GUARD_EXPONENT:
        raise SolveError(
            f"weight exponent {expo:.3g} out of range on cell {cell}; "
            "use the center-anchored weight mode"
        )
    return math.exp(expo)


# ---------------------------------------------------------------------------
# local assembly
# ---------------------------------------------------------------------------

class _CellOperator:
    """Assembled local operator shared by all cells with congruent geometry,
    drift, stabilization and weight anchoring."""

    def __init__(self, mesh, spec, config, cell, beta_cell, tau_slots, anchor, log_scale):
        d = mesh.dim
        k = config.degree
        self.degree = k
        basis = TensorBasis(k, d)
        fbasis = TensorBasis(k, d - 1) if d == 2 else None
        m = basis.size
        mf = (k + 1) ** (d - 1)
        self.m, self.mf, self.dim = m, mf, d
        nQ = d * m
        nloc = nQ + m
        extent = mesh.cell_extent[cell]
        lower = mesh.cell_lower[cell]
        alpha = spec.alpha
        unweighted = config.weight_mode == WeightMode.UNWEIGHTED
        weighted_transmission = config.weight_mode in (WeightMode.GLOBAL, WeightMode.CHAINED)
        nq = k + 3

        crule = wquad.cell_rule(beta_cell, alpha, lower, extent, nq,
                                x_ref=anchor, log_scale=log_scale, unweighted=unweighted)
        V = basis.eval(crule.ref_points)
        Gref = basis.eval_grad(crule.ref_points)
        G = Gref / extent[None, None, :]
        w = crule.weights
        self.volume_values = V
        self.quad_weights = w
        self.ref_points = crule.ref_points
        self.lower = lower
        self.extent = extent

        Mw = np.einsum("qi,q,qj->ij", V, w, V)
        A = np.zeros((nloc, nloc))
        for c in range(d):
            A[c * m:(c + 1) * m, c * m:(c + 1) * m] = Mw
        # M1[c][a, b] = sum_q w_q (d phi_a / d x_c) phi_b; the derivative index
        # is the row.
        M1 = [np.einsum("qi,q,qj->ij", G[:, :, c], w, V) for c in range(d)]
        for c in range(d):
            # flux equation, U columns: -(alpha U, div Q), derivative on Q
            A[c * m:(c + 1) * m, nQ:] += -alpha * M1[c]
            # scalar equation, J columns: -(J, grad W), derivative on W
            A[nQ:, c * m:(c + 1) * m] += -M1[c]
            if unweighted:
                A[c * m:(c + 1) * m, nQ:] += -beta_cell[c] * Mw
            else:
                A[nQ:, c * m:(c + 1) * m] += (beta_cell[c] / alpha) * Mw

        nF = 2 * d * mf
        R = np.zeros((nloc, nF))
        L = np.zeros((nF, nloc))
        Mff = np.zeros((nF, nF))
        self.face_slot_axes = []
        slots = mesh.cell_faces[cell]
        for s, fid in enumerate(slots):
            ax = int(mesh.face_axis[fid])
            sign = mesh.orientation(cell, fid)
            tau = tau_slots[s]
            self.face_slot_axes.append(ax)
            wfr = wquad.face_rule(beta_cell, alpha, mesh.face_lower[fid], mesh.face_extent[fid],
                                  ax, lower, extent, nq, x_ref=anchor, log_scale=log_scale,
                                  unweighted=unweighted)
            Vf = basis.eval(wfr.cell_ref_points)
            Ff = fbasis.eval(wfr.ref_points) if d == 2 else np.ones((1, 1))
            wf = wfr.weights
            VwV = np.einsum("qi,q,qj->ij", Vf, wf, Vf)
            VwF = np.einsum("qi,q,qj->ij", Vf, wf, Ff)
            cols = slice(s * mf, (s + 1) * mf)
            # flux equation: + <alpha Uhat, Q . n>
            R[ax * m:(ax + 1) * m, cols] += -alpha * sign * VwF
            # scalar equation: + <J . n, W> + <tau (U - Uhat), W>
            A[nQ:, ax * m:(ax + 1) * m] += sign * VwV
            A[nQ:, nQ:] += tau * VwV
            R[nQ:, cols] += tau * VwF

            if weighted_transmission and mesh.face_label[fid] == INTERIOR:
                tfr = wfr
                Vt, Ft, wt = Vf, Ff, wf
            else:
                tfr = wquad.face_rule(beta_cell, alpha, mesh.face_lower[fid],
                                      mesh.face_extent[fid], ax, lower, extent, nq,
                                      unweighted=True)
                Vt = basis.eval(tfr.cell_ref_points)
                Ft = fbasis.eval(tfr.ref_points) if d == 2 else np.ones((1, 1))
                wt = tfr.weights
            FwV = np.einsum("qi,q,qj->ij", Ft, wt, Vt)
            L[cols, ax * m:(ax + 1) * m] += sign * FwV
            L[cols, nQ:] += tau * FwV
            Mff[cols, cols] += tau * np.einsum("qi,q,qj->ij", Ft, wt, Ft)

        self.matrix = A
        self.lu = sla.lu_factor(A)
        anorm = np.linalg.norm(A, 1)
        gecon = sla.get_lapack_funcs("gecon", (A,))
        rcond, info = gecon(self.lu[0], anorm)
        self.cond_estimate = np.inf if rcond == 0 else 1.0 / rcond
        if not np.isfinite(self.cond_estimate) or self.cond_estimate > config.cond_limit:
            raise SolveError(
                f"local system on cell {cell} is ill conditioned "
                f"(estimate {self.cond_estimate:.3g}); check stabilization and scaling"
            )
        self.rhs_face = R
        self.flux_map = L
        self.flux_faceface = Mff
        self.trace_coupling = L @ sla.lu_solve(self.lu, R) - Mff

    def f_moments(self, fvals_times_w):
        """Local rhs blocks from source moments; input (ncells, nq)."""
        nloc = self.matrix.shape[0]
        out = np.zeros((fvals_times_w.shape[0], nloc))
        out[:, nloc - self.m:] = fvals_times_w @ self.volume_values
        return out


def _operator_key(extent, beta_cell, tau_slots, anchor_offset, log_scale, labels):
    return (
        extent.tobytes(),
        beta_cell.tobytes(),
        tau_slots.tobytes(),
        None if anchor_offset is None else anchor_offset.tobytes(),
        float(log_scale),
        labels.tobytes(),
    )


def assemble_local(mesh: Mesh, cell: int, spec: ProblemSpec, config: SolverConfig) -> LocalSystem:
    """Assemble and factorize the local problem of one cell."""
    beta = spec.beta_per_cell(mesh)
    tau = config.tau_per_face(mesh)
    anchors, log_scales = _weight_anchors(mesh, beta, config, spec.alpha)
    op = _CellOperator(mesh, spec, config, cell, beta[cell],
                       tau[mesh.cell_faces[cell]], anchors[cell], log_scales[cell])
    return LocalSystem(
        cell=cell,
        matrix=op.matrix,
        lu=op.lu,
        rhs_face=op.rhs_face,
        flux_map=op.flux_map,
        flux_faceface=op.flux_faceface,
        volume_values=op.volume_values,
        quad_weights=op.quad_weights,
        phys_points=mesh.cell_lower[cell] + op.ref_points * mesh.cell_extent[cell],
        cond_estimate=op.cond_estimate,
        face_slots=mesh.cell_faces[cell].copy(),
    )


# ---------------------------------------------------------------------------
# global system
# ---------------------------------------------------------------------------

def dirichlet_project(g_dirichlet, mesh: Mesh, face: int, degree: int) -> np.ndarray:
    """L2 projection of the Dirichlet datum onto the face polynomial space."""
    if mesh.face_label[face] != DIRICHLET:
        raise ValueError("face is not labeled Dirichlet")
    d = mesh.dim
    cell = int(mesh.face_cells[face].max())
    fr = wquad.face_rule(np.zeros(d), 1.0, mesh.face_lower[face], mesh.face_extent[face],
                         int(mesh.face_axis[face]), mesh.cell_lower[cell],
                         mesh.cell_extent[cell], degree + 2, unweighted=True)
    gvals = _evaluate(g_dirichlet, fr.points)
    if d == 1:
        return np.array([float(gvals[0])])
    fbasis = TensorBasis(degree, 1)
    Ff = fbasis.eval(fr.ref_points)
    measure = mesh.face_measure()[face]
    return (Ff * fr.weights[:, None] * gvals[:, None]).sum(axis=0) / measure


class _GroupedOperators:
    """Cells grouped by congruent local operators (big win on uniform grids)."""

    def __init__(self, mesh, spec, config):
        beta = spec.beta_per_cell(mesh)
        tau = config.tau_per_face(mesh)
        anchors, log_scales = _weight_anchors(mesh, beta, config, spec.alpha)
        centers = mesh.cell_center()
        groups: dict = {}
        for c in range(mesh.n_cells):
            slots = mesh.cell_faces[c]
            anchor = anchors[c]
            offset = None if anchor is None else np.asarray(anchor) - centers[c]
            key = _operator_key(mesh.cell_extent[c], beta[c], tau[slots], offset,
                                log_scales[c], mesh.face_label[slots])
            groups.setdefault(key, []).append(c)
        self.mesh, self.spec, self.config = mesh, spec, config
        self.groups = []
        for key, cells in groups.items():
            c0 = cells[0]
            op = _CellOperator(mesh, spec, config, c0, beta[c0],
                               tau[mesh.cell_faces[c0]], anchors[c0], log_scales[c0])
            self.groups.append((op, np.asarray(cells, dtype=np.int64)))
        self.max_cond = max(op.cond_estimate for op, _ in self.groups)

    def source_moments(self, op, cells):
        """(ncells, nloc) right-hand-side blocks for the group."""
        mesh, spec = self.mesh, self.spec
        if spec.f is None:
            return np.zeros((cells.shape[0], op.matrix.shape[0]))
        pts = mesh.cell_lower[cells][:, None, :] + op.ref_points[None, :, :] * \
            mesh.cell_extent[cells][:, None, :]
        fvals = _evaluate(spec.f, pts.reshape(-1, mesh.dim)).reshape(cells.shape[0], -1)
        return op.f_moments(fvals * op.quad_weights[None, :])


def condense(mesh: Mesh, spec: ProblemSpec, config: SolverConfig):
    """Schur complement onto the skeleton trace unknowns.

    Returns ``(trace_system, grouped_operators)``.  Requires strictly
    positive stabilization on every face (the tau >= 0 relaxations of the
    local theory are not exposed at the solve level).
    """
    if np.any(config.tau_per_face(mesh) <= 0.0):
        raise ValueError("solving requires tau > 0 on every face")
    d = mesh.dim
    k = config.degree
    mf = (k + 1) ** (d - 1)
    labels = mesh.face_label
    free = labels != DIRICHLET
    face_dof_start = -np.ones(mesh.n_faces, dtype=np.int64)
    face_dof_start[free] = np.arange(free.sum()) * mf
    n_dofs = int(free.sum()) * mf

    dir_coeffs = np.zeros((mesh.n_faces, mf))
    for fid in np.nonzero(labels == DIRICHLET)[0]:
        dir_coeffs[fid] = dirichlet_project(spec.g_dirichlet, mesh, fid, k)

    ops = _GroupedOperators(mesh, spec, config)
    rows_acc, cols_acc, vals_acc = [], [], []
    rhs = np.zeros(n_dofs)

    for op, cells in ops.groups:
        S = op.trace_coupling
        nF = S.shape[0]
        fm = ops.source_moments(op, cells)
        # moments of the f-driven local flux against the face tests
        y = sla.lu_solve(op.lu, fm.T)            # (nloc, ncells)
        gK = (op.flux_map @ y).T                  # (ncells, nF)

        faces = mesh.cell_faces[cells]            # (ncells, 2d)
        slot_dofs = np.repeat(face_dof_start[faces], mf, axis=1)
        slot_dofs += np.tile(np.tile(np.arange(mf), 2 * d), (cells.shape[0], 1))
        slot_dofs[np.repeat(face_dof_start[faces] < 0, mf, axis=1)] = -1

        dir_vals = dir_coeffs[faces].reshape(cells.shape[0], nF)

        free_mask = slot_dofs >= 0
        # matrix entries: rows free x cols free
        for c_local in range(cells.shape[0]):
            rmask = free_mask[c_local]
            rdofs = slot_dofs[c_local]
            Src = S[np.ix_(rmask, rmask)]
            rows_acc.append(np.repeat(rdofs[rmask], rmask.sum()))
            cols_acc.append(np.tile(rdofs[rmask], rmask.sum()))
            vals_acc.append(Src.ravel())
            if np.any(~rmask):
                contrib = S[np.ix_(rmask, ~rmask)] @ dir_vals[c_local][~rmask]
                np.add.at(rhs, rdofs[rmask], -contrib)
            np.add.at(rhs, rdofs[rmask], -gK[c_local][rmask])

    # Neumann data
    for fid in np.nonzero(labels == NEUMANN)[0]:
        cell = int(mesh.face_cells[fid].max())
        fr = wquad.face_rule(np.zeros(d), 1.0, mesh.face_lower[fid], mesh.face_extent[fid],
                             int(mesh.face_axis[fid]), mesh.cell_lower[cell],
                             mesh.cell_extent[cell], k + 3, unweighted=True)
        gn = _evaluate(spec.g_neumann, fr.points)
        if d == 1:
            moments = np.array([float(gn[0])])
        else:
            Ff = TensorBasis(k, 1).eval(fr.ref_points)
            moments = (Ff * fr.weights[:, None] * gn[:, None]).sum(axis=0)
        start = face_dof_start[fid]
        rhs[start:start + mf] += moments

    if n_dofs:
        rows = np.concatenate(rows_acc)
        cols = np.concatenate(cols_acc)
        vals = np.concatenate(vals_acc)
        matrix = sp.coo_matrix((vals, (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()
        occupied = np.diff(matrix.indptr) > 0
        if not np.all(occupied):
            raise SolveError("trace system has empty rows")
    else:
        matrix = sp.csr_matrix((0, 0))

    ts = TraceSystem(matrix=matrix, rhs=rhs, face_dof_start=face_dof_start,
                     dirichlet_coeffs=dir_coeffs, n_dofs=n_dofs, dofs_per_face=mf)
    return ts, ops


def solve(mesh: Mesh, spec: ProblemSpec, config: SolverConfig) -> Solution:
    """Full pipeline: condense, solve the trace system, recover (J, U)."""
    ts, ops = condense(mesh, spec, config)
    if ts.n_dofs:
        uhat_free = spla.spsolve(ts.matrix, ts.rhs)
        resid_num = np.linalg.norm(ts.matrix @ uhat_free - ts.rhs)
        residual = resid_num / max(np.linalg.norm(ts.rhs), 1e-300)
        if not np.isfinite(residual) or residual > config.residual_tol:
            raise SolveError(f"trace solve stalled at relative residual {residual:.3e}")
    else:
        uhat_free = np.zeros(0)
        residual = 0.0

    mf = ts.dofs_per_face
    Uhat = ts.dirichlet_coeffs.copy()
    for fid in range(mesh.n_faces):
        start = ts.face_dof_start[fid]
        if start >= 0:
            Uhat[fid] = uhat_free[start:start + mf]

    k = config.degree
    d = mesh.dim
    m = (k + 1) ** d
    U = np.empty((mesh.n_cells, m))
    J = np.empty((mesh.n_cells, d, m))
    for op, cells in ops.groups:
        fm = ops.source_moments(op, cells)
        uhat_slots = Uhat[mesh.cell_faces[cells]].reshape(cells.shape[0], -1)
        rhs_loc = uhat_slots @ op.rhs_face.T + fm
        z = sla.lu_solve(op.lu, rhs_loc.T).T     # (ncells, nloc)
        J[cells] = z[:, : d * m].reshape(cells.shape[0], d, m)
        U[cells] = z[:, d * m:]

    log.info(
        "solve dofs=%d cells=%d degree=%d mode=%s residual=%.3e cond_max=%.3e",
        ts.n_dofs, mesh.n_cells, k, config.weight_mode.value, residual, ops.max_cond,
    )
    return Solution(mesh=mesh, config=config, U=U, J=J, Uhat=Uhat,
                    diagnostics={"residual": residual, "cond_max": ops.max_cond,
                                 "n_trace_dofs": ts.n_dofs})


def trace_matrix(mesh: Mesh, spec: ProblemSpec, config: SolverConfig) -> np.ndarray:
    """Dense copy of the condensed trace matrix (small problems/tests)."""
    ts, _ = condense(mesh, spec, config)
    return ts.matrix.toarray()


def solution_to_csv(sol: Solution, path) -> None:
    """Dump per-cell (J, U) coefficients and per-face trace coefficients."""
    with open(path, "w") as fh:
        fh.write("kind,id,component,coefficients...\n")
        for c in range(sol.mesh.n_cells):
            for comp in range(sol.mesh.dim):
                row = ",".join(f"{v:.16g}" for v in sol.J[c, comp])
                fh.write(f"flux,{c},{comp},{row}\n")
            row = ",".join(f"{v:.16g}" for v in sol.U[c])
            fh.write(f"scalar,{c},,{row}\n")
        for f in range(sol.mesh.n_faces):
            row = ",".join(f"{v:.16g}" for v in sol.Uhat[f])
            fh.write(f"trace,{f},,{row}\n")


# ---------------------------------------------------------------------------
# solution evaluation and checks
# ---------------------------------------------------------------------------

def eval_scalar(mesh: Mesh, coeffs: np.ndarray, degree: int, ref_points: np.ndarray) -> np.ndarray:
    """Evaluate per-cell scalar coefficients at shared reference points.

    Returns (n_cells, n_points).
    """
    basis = TensorBasis(degree, mesh.dim)
    V = basis.eval(ref_points)
    return coeffs @ V.T


def eval_vector(mesh: Mesh, coeffs: np.ndarray, degree: int, ref_points: np.ndarray) -> np.ndarray:
    """(n_cells, d, n_points) values of a per-component expanded vector field."""
    basis = TensorBasis(degree, mesh.dim)
    V = basis.eval(ref_points)
    return np.einsum("cdm,qm->cdq", coeffs, V)


def numerical_flux_moments(sol: Solution, spec: ProblemSpec, face: int, cell: int,
                           weighted: bool = False) -> np.ndarray:
    """Moments <Jhat . n, xi>_face of one cell's numerical flux."""
    mesh, config = sol.mesh, sol.config
    k = config.degree
    d = mesh.dim
    beta = spec.beta_per_cell(mesh)
    tau = config.tau_per_face(mesh)[face]
    anchors, log_scales = _weight_anchors(mesh, beta, config, spec.alpha)
    ax = int(mesh.face_axis[face])
    sign = mesh.orientation(cell, face)
    fr = wquad.face_rule(beta[cell], spec.alpha, mesh.face_lower[face], mesh.face_extent[face],
                         ax, mesh.cell_lower[cell], mesh.cell_extent[cell], k + 3,
                         x_ref=anchors[cell], log_scale=log_scales[cell],
                         unweighted=not weighted or config.weight_mode == WeightMode.UNWEIGHTED)
    basis = TensorBasis(k, d)
    Vf = basis.eval(fr.cell_ref_points)
    Ff = TensorBasis(k, 1).eval(fr.ref_points) if d == 2 else np.ones((1, 1))
    jn = sign * (sol.J[cell, ax] @ Vf.T)
    uval = sol.U[cell] @ Vf.T
    uhat = sol.Uhat[face] @ (Ff.T if d == 2 else np.ones((1, 1)))
    jhat = jn + tau * (uval - uhat)
    return (Ff * (fr.weights * jhat)[:, None]).sum(axis=0)


def transmission_residual(sol: Solution, spec: ProblemSpec) -> float:
    """Largest plain-test moment of the numerical-flux jump on interior faces."""
    mesh = sol.mesh
    worst = 0.0
    for fid in np.nonzero(mesh.face_label == INTERIOR)[0]:
        minus, plus = mesh.face_cells[fid]
        mom = numerical_flux_moments(sol, spec, fid, int(minus)) + \
            numerical_flux_moments(sol, spec, fid, int(plus))
        worst = max(worst, float(np.max(np.abs(mom))))
    return worst


def local_energy_identity(mesh: Mesh, cell: int, spec: ProblemSpec, config: SolverConfig,
                          lam_coeffs: np.ndarray):
    """Weighted energy balance of one cell's local solve with f = 0.

    For trace data Lambda the local solution satisfies
    (1/alpha) (J, J)_mu + <tau (U - Lambda), (U - Lambda)>_mu
        = -<Jhat . n, Lambda>_mu;
    returns ``(lhs, rhs)`` of that identity.
    """
    beta = spec.beta_per_cell(mesh)
    tau = config.tau_per_face(mesh)
    anchors, log_scales = _weight_anchors(mesh, beta, config, spec.alpha)
    loc = assemble_local(mesh, cell, spec, config)
    rhs_loc = loc.rhs_face @ lam_coeffs
    z = sla.lu_solve(loc.lu, rhs_loc)
    d, k = mesh.dim, config.degree
    m = (k + 1) ** d
    Jc = z[: d * m].reshape(d, m)
    Uc = z[d * m:]

    basis = TensorBasis(k, d)
    Vq = loc.volume_values
    jvals = np.einsum("dm,qm->dq", Jc, Vq)
    lhs = float(np.sum(loc.quad_weights * np.sum(jvals**2, axis=0)) / spec.alpha)
    rhs_val = 0.0
    mf = (k + 1) ** (d - 1)
    for s, fid in enumerate(loc.face_slots):
        ax = int(mesh.face_axis[fid])
        sign = mesh.orientation(cell, fid)
        fr = wquad.face_rule(beta[cell], spec.alpha, mesh.face_lower[fid], mesh.face_extent[fid],
                             ax, mesh.cell_lower[cell], mesh.cell_extent[cell], k + 3,
                             x_ref=anchors[cell], log_scale=log_scales[cell],
                             unweighted=config.weight_mode == WeightMode.UNWEIGHTED)
        Vf = basis.eval(fr.cell_ref_points)
        Ff = TensorBasis(k, 1).eval(fr.ref_points) if d == 2 else np.ones((1, 1))
        lam_f = lam_coeffs[s * mf:(s + 1) * mf]
        lam_vals = Ff @ lam_f
        uvals = Vf @ Uc
        jn = sign * (Vf @ Jc[ax])
        t = tau[fid]
        lhs += float(np.sum(fr.weights * t * (uvals - lam_vals) ** 2))
        jhat = jn + t * (uvals - lam_vals)
        rhs_val += float(-np.sum(fr.weights * jhat * lam_vals))
    return lhs, rhs_val
