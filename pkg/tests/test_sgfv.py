import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from whdg import core, meshgen, sgfv


class TestBernoulli:
    def test_removable_singularity(self):
        assert sgfv.bernoulli(0.0) == 1.0

    def test_direct_value(self):
        assert sgfv.bernoulli(1.0) == pytest.approx(1.0 / (np.e - 1.0), rel=1e-14)

    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
    def test_reflection_identity(self, t):
        assert sgfv.bernoulli(-t) - sgfv.bernoulli(t) == pytest.approx(t, rel=1e-13)

    @given(t=st.floats(-400.0, 400.0))
    @settings(max_examples=80, deadline=None)
    def test_positive_total_function(self, t):
        v = sgfv.bernoulli(t)
        assert np.isfinite(v) and v > 0.0

    def test_series_matches_direct_at_crossover(self):
        for t in (9.9e-5, 1.01e-4, -9.9e-5, -1.01e-4):
            direct = t / np.expm1(t)
            assert sgfv.bernoulli(t) == pytest.approx(direct, rel=1e-12)

    def test_asymptotic_branches(self):
        assert sgfv.bernoulli(-600.0) == 600.0
        assert sgfv.bernoulli(600.0) == pytest.approx(600.0 * np.exp(-600.0), abs=1e-300)


class TestAssembleSG:
    def test_pure_diffusion_stencil(self):
        nodes = np.linspace(0.0, 1.0, 6)
        s = sgfv.assemble_sg(nodes, 2.0, 0.0, (0.0, 0.0))
        h = 0.2
        np.testing.assert_allclose(s.sub, 2.0 / h, rtol=1e-14)
        np.testing.assert_allclose(s.sup, 2.0 / h, rtol=1e-14)
        np.testing.assert_allclose(s.diag, -4.0 / h, rtol=1e-14)

    @pytest.mark.parametrize("beta", [-20.0, -1.0, 3.0, 40.0])
    def test_sign_pattern(self, beta):
        nodes = np.sort(np.concatenate([[0, 1], np.random.default_rng(0).random(8)]))
        s = sgfv.assemble_sg(nodes, 0.5, beta, (0.0, 1.0))
        assert np.all(s.sub > 0) and np.all(s.sup > 0) and np.all(s.diag < 0)

    def test_matches_small_tau_trace_matrix(self):
        nodes = np.linspace(0.0, 1.0, 9)
        s = sgfv.assemble_sg(nodes, 1.0, 5.0, (0.0, 0.0))
        dense = s.dense_matrix()
        mesh = meshgen.build_tensor_mesh([nodes])
        spec = core.ProblemSpec(alpha=1.0, beta=np.array([5.0]))
        config = core.SolverConfig(degree=0, tau=1e-10)
        trace = core.trace_matrix(mesh, spec, config)
        mask = dense != 0.0
        rel = np.max(np.abs(trace - dense)[mask] / np.abs(dense)[mask])
        assert rel <= 1e-6

    @given(beta=st.floats(-30.0, 30.0), n_cells=st.integers(3, 10),
           seed=st.integers(0, 2**31))
    @settings(max_examples=20, deadline=None)
    def test_trace_equivalence_on_random_grids(self, beta, n_cells, seed):
        # the vanishing-stabilization trace matrix equals the finite volume
        # matrix on arbitrary nonuniform grids, not just the uniform one
        rng = np.random.default_rng(seed)
        nodes = np.sort(np.concatenate([[0.0, 1.0], rng.random(n_cells - 1)]))
        if np.min(np.diff(nodes)) < 1e-3:
            return
        dense = sgfv.assemble_sg(nodes, 1.0, beta, (0.0, 0.0)).dense_matrix()
        mesh = meshgen.build_tensor_mesh([nodes])
        spec = core.ProblemSpec(alpha=1.0, beta=np.array([beta]))
        trace = core.trace_matrix(mesh, spec, core.SolverConfig(degree=0, tau=1e-12))
        mask = dense != 0.0
        rel = np.max(np.abs(trace - dense)[mask] / np.abs(dense)[mask])
        assert rel <= 1e-7

    def test_rejects_tiny_grids(self):
        with pytest.raises(ValueError):
            sgfv.assemble_sg([0.0, 1.0], 1.0, 1.0, (0.0, 0.0))


class TestSolveSG:
    def test_pure_diffusion_is_linear(self):
        nodes = np.sort(np.concatenate([[0, 1], np.random.default_rng(2).random(7)]))
        s = sgfv.assemble_sg(nodes, 1.0, 0.0, (0.0, 1.0))
        sol = sgfv.solve_sg(s)
        np.testing.assert_allclose(sol.values, nodes, atol=1e-13)

    @pytest.mark.parametrize("beta", [1.0, 10.0, 100.0])
    def test_nodal_exactness_constant_beta(self, beta):
        # exact solution of the two-point boundary problem with f = 0 is
        # c1 + c2 exp(beta x / alpha)
        uex = lambda x: np.expm1(beta * x) / np.expm1(beta)
        nodes = np.sort(np.concatenate([[0, 1], np.random.default_rng(3).random(12)]))
        s = sgfv.assemble_sg(nodes, 1.0, beta, (0.0, 1.0))
        sol = sgfv.solve_sg(s)
        scale = np.maximum(np.abs(uex(nodes)), 1e-30)
        assert np.max(np.abs(sol.values - uex(nodes)) / scale) < 1e-9

    def test_flux_telescoping(self):
        nodes = np.sort(np.concatenate([[0, 1], np.random.default_rng(4).random(9)]))
        beta = np.random.default_rng(5).uniform(-5, 5, nodes.size - 1)
        s = sgfv.assemble_sg(nodes, 1.0, beta, (1.0, 0.3))
        sol = sgfv.solve_sg(s)
        scale = max(np.max(np.abs(sol.fluxes)), 1e-30)
        assert np.ptp(sol.fluxes) / scale < 1e-10

    @pytest.mark.parametrize("beta", [-25.0, 0.0, 7.5])
    def test_discrete_maximum_principle_constant_drift(self, beta):
        nodes = np.linspace(0.0, 1.0, 17)
        s = sgfv.assemble_sg(nodes, 1.0, beta, (0.2, 0.9))
        sol = sgfv.solve_sg(s)
        assert sol.values.min() >= 0.2 - 1e-12
        assert sol.values.max() <= 0.9 + 1e-12

    def test_nonnegativity_varying_drift(self):
        # inverse positivity of the M-matrix: nonnegative data, nonnegative
        # solution, even when the drift changes cell to cell
        nodes = np.linspace(0.0, 1.0, 17)
        beta = np.random.default_rng(6).uniform(-30, 30, 16)
        s = sgfv.assemble_sg(nodes, 1.0, beta, (0.2, 0.9))
        sol = sgfv.solve_sg(s)
        assert sol.values.min() >= 0.0

    def test_reversal_symmetry(self):
        nodes = np.sort(np.concatenate([[0, 1], np.random.default_rng(7).random(6)]))
        beta = np.random.default_rng(8).uniform(-4, 4, nodes.size - 1)
        fwd = sgfv.solve_sg(sgfv.assemble_sg(nodes, 1.0, beta, (0.4, 1.3)))
        rev_nodes = np.sort(1.0 - nodes)
        rev = sgfv.solve_sg(sgfv.assemble_sg(rev_nodes, 1.0, -beta[::-1], (1.3, 0.4)))
        np.testing.assert_allclose(rev.values, fwd.values[::-1], rtol=1e-12, atol=1e-14)

    def test_source_term_matches_small_tau_hybrid(self):
        # the source handling is defined as the vanishing-stabilization limit
        # of the hybrid scheme; check the two solvers agree at tiny tau
        nodes = np.linspace(0.0, 1.0, 11)
        beta = 3.0
        f = lambda pts: np.sin(3.0 * pts[:, 0]) + 1.0
        s = sgfv.assemble_sg(nodes, 1.0, beta, (0.0, 0.0), f=f)
        fv = sgfv.solve_sg(s)
        mesh = meshgen.build_tensor_mesh([nodes])
        spec = core.ProblemSpec(alpha=1.0, beta=np.array([beta]), f=f, g_dirichlet=0.0)
        config = core.SolverConfig(degree=0, tau=1e-8)
        sol = core.solve(mesh, spec, config)
        order = np.argsort(mesh.face_center()[:, 0])
        np.testing.assert_allclose(sol.Uhat[order, 0], fv.values, rtol=1e-6, atol=1e-9)
