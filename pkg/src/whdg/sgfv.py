"""Two-point finite volume scheme with Scharfetter-Gummel flux (1d).

Between nodes x_{i-1} and x_i with spacing h and cellwise-constant drift
beta, the exponentially fitted flux through the cell is

    J = (alpha / h) * (B(-t) L_{i-1} - B(t) L_i),    t = beta h / alpha,

with the Bernoulli function B(t) = t / (e^t - 1).  Flux balance at every
interior node yields a tridiagonal M-matrix system for the nodal values;
the scheme is nodally exact for two-point boundary problems with constant
beta and f = 0 and satisfies a discrete maximum principle.

This doubles as the vanishing-stabilization oracle for the weighted HDG
trace system at polynomial degree zero.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import kernels, wquad


def bernoulli(t):
    """B(t) = t / (e^t - 1); total function, scalar in scalar out."""
    out = kernels.bernoulli(t)
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(out[0])
    return out


@dataclass
class SGSystem:
    """Tridiagonal flux-balance system over the interior nodes."""

    nodes: np.ndarray
    alpha: float
    beta: np.ndarray          # per cell
    sub: np.ndarray           # coefficient of L_{i-1}
    diag: np.ndarray
    sup: np.ndarray           # coefficient of L_{i+1}
    rhs: np.ndarray
    boundary: tuple           # (left value, right value)

    def dense_matrix(self) -> np.ndarray:
        n = self.diag.shape[0]
        M = np.zeros((n, n))
        idx = np.arange(n)
        M[idx, idx] = self.diag
        M[idx[1:], idx[:-1]] = self.sub[1:]
        M[idx[:-1], idx[1:]] = self.sup[:-1]
        return M


@dataclass
class FVSolution:
    nodes: np.ndarray
    values: np.ndarray        # nodal, boundary included
    fluxes: np.ndarray        # one per cell


def _cell_source_integrals(nodes, alpha, beta, f):
    """Weighted source integrals per cell, int_cell f mu with the weight
    anchored at the cell center."""
    n_cells = nodes.shape[0] - 1
    out = np.zeros(n_cells)
    if f is None:
        return out
    for i in range(n_cells):
        lo, h = nodes[i], nodes[i + 1] - nodes[i]
        rule = wquad.cell_rule(np.array([beta[i]]), alpha, np.array([lo]), np.array([h]), 6)
        out[i] = float(np.sum(rule.weights * np.asarray(f(rule.points))))
    return out


def assemble_sg(nodes, alpha: float, beta, boundary_values, f=None) -> SGSystem:
    """Flux-balance system for Dirichlet data at both endpoints.

    ``beta`` is a scalar or one value per cell.  With a source term the
    right-hand side combines the two adjacent weighted cell integrals
    F_i / (e_i + e_{-i}), which is the vanishing-stabilization limit of the
    hybridized scheme (e_i = exp(beta_i h_i / (2 alpha))).
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    n_cells = nodes.shape[0] - 1
    if n_cells < 2:
        raise ValueError("need at least two cells")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    beta = np.broadcast_to(np.asarray(beta, dtype=np.float64), (n_cells,)).copy()
    h = np.diff(nodes)
    t = beta * h / alpha
    c = alpha / h
    b_minus = c * np.asarray(kernels.bernoulli(-t))   # upwind coefficient
    b_plus = c * np.asarray(kernels.bernoulli(t))

    sub = b_minus[:-1]
    sup = b_plus[1:]
    diag = -(b_plus[:-1] + b_minus[1:])

    F = _cell_source_integrals(nodes, alpha, beta, f)
    damp = np.exp(t / 2.0) + np.exp(-t / 2.0)
    favg = F / damp
    rhs = -(favg[:-1] + favg[1:])

    gl, gr = float(boundary_values[0]), float(boundary_values[1])
    rhs = rhs.copy()
    rhs[0] -= sub[0] * gl
    rhs[-1] -= sup[-1] * gr
    return SGSystem(nodes=nodes, alpha=alpha, beta=beta, sub=sub, diag=diag, sup=sup,
                    rhs=rhs, boundary=(gl, gr))


def solve_sg(system: SGSystem) -> FVSolution:
    """Solve the tridiagonal system and recover per-cell fluxes."""
    n = system.diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = system.sup[:-1]
    ab[1, :] = system.diag
    ab[2, :-1] = system.sub[1:]
    interior = sla.solve_banded((1, 1), ab, system.rhs)
    values = np.concatenate([[system.boundary[0]], interior, [system.boundary[1]]])

    h = np.diff(system.nodes)
    t = system.beta * h / system.alpha
    c = system.alpha / h
    fluxes = c * (np.asarray(kernels.bernoulli(-t)) * values[:-1]
                  - np.asarray(kernels.bernoulli(t)) * values[1:])
    return FVSolution(nodes=system.nodes, values=values, fluxes=fluxes)
