"""Weighted hybridizable DG solver for drift-diffusion problems.

Exponential weights in the per-cell products absorb the drift term from
the local solvers, generalizing Scharfetter-Gummel exponential fitting to
arbitrary polynomial order while keeping the primal unknowns.
"""

from .core import (ProblemSpec, SolverConfig, Solution, SolveError, WeightMode,
                   assemble_local, chain_xk_1d, condense, dirichlet_project,
                   local_weight, solution_to_csv, solve, trace_matrix)
from .harness import (ConvergenceReport, Manufactured2D, PinConfig, PinReport,
                      compute_rates, manufactured_2d, run_convergence,
                      run_pin_benchmark, solve_nonlinear_poisson)
from .meshgen import (DIRICHLET, INTERIOR, NEUMANN, Mesh, build_pin_grid,
                      build_tensor_mesh, build_uniform_cartesian, mesh_to_csv)
from .polyspace import RTBasis, TensorBasis
from .postproc import (PostField, flux_reconstruction, l2min_postprocess,
                       local_resolve, trace_linear_1d)
from .sgfv import FVSolution, SGSystem, assemble_sg, bernoulli, solve_sg
from .wquad import (QuadratureRule, analytic_moment, cell_rule, face_rule,
                    gauss_legendre, weighted_gauss)

__version__ = "0.1.0"

__all__ = [
    "ProblemSpec", "SolverConfig", "Solution", "SolveError", "WeightMode",
    "assemble_local", "chain_xk_1d", "condense", "dirichlet_project",
    "local_weight", "solution_to_csv", "solve", "trace_matrix",
    "ConvergenceReport", "Manufactured2D", "PinConfig", "PinReport",
    "compute_rates", "manufactured_2d", "run_convergence", "run_pin_benchmark",
    "solve_nonlinear_poisson",
    "DIRICHLET", "INTERIOR", "NEUMANN", "Mesh", "build_pin_grid",
    "build_tensor_mesh", "build_uniform_cartesian", "mesh_to_csv",
    "RTBasis", "TensorBasis",
    "PostField", "flux_reconstruction", "l2min_postprocess", "local_resolve",
    "trace_linear_1d",
    "FVSolution", "SGSystem", "assemble_sg", "bernoulli", "solve_sg",
    "QuadratureRule", "analytic_moment", "cell_rule", "face_rule",
    "gauss_legendre", "weighted_gauss",
]
