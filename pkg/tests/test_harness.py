import json

import numpy as np
import pytest

from whdg import core, harness, meshgen


class TestManufactured:
    def test_vanishes_on_outflow_boundary(self):
        ex = harness.manufactured_2d((7.0, 3.0))
        pts = np.array([[1.0, 0.3], [0.4, 1.0], [0.0, 0.6], [0.2, 0.0], [1.0, 1.0]])
        np.testing.assert_allclose(ex.u(pts), 0.0, atol=1e-15)

    def test_source_against_finite_differences(self):
        ex = harness.manufactured_2d((10.0, 10.0))
        rng = np.random.default_rng(7)
        pts = 0.1 + 0.8 * rng.random((20, 2))
        h = 2e-4
        for p in pts:
            u0 = ex.u(p[None, :])[0]
            lap, conv = 0.0, 0.0
            for a in range(2):
                e = np.zeros(2)
                e[a] = h
                up = ex.u((p + e)[None, :])[0]
                um = ex.u((p - e)[None, :])[0]
                lap += (up - 2 * u0 + um) / h**2
                conv += ex.beta[a] * (up - um) / (2 * h)
            f_fd = -ex.alpha * lap + conv
            f_an = ex.f(p[None, :])[0]
            assert abs(f_fd - f_an) / max(abs(f_an), 1.0) < 1e-6

    def test_zero_drift_limit_profile(self):
        ex = harness.manufactured_2d((1e-12, 1e-12))
        p = np.array([[0.3, 0.7]])
        assert ex.u(p)[0] == pytest.approx(0.3 * 0.7 * 0.7 * 0.3, rel=1e-6)

    def test_flux_divergence_is_source(self):
        ex = harness.manufactured_2d((5.0, 2.0))
        rng = np.random.default_rng(8)
        pts = 0.1 + 0.8 * rng.random((10, 2))
        h = 1e-5
        for p in pts:
            div = 0.0
            for a in range(2):
                e = np.zeros(2)
                e[a] = h
                div += (ex.flux((p + e)[None, :])[0, a]
                        - ex.flux((p - e)[None, :])[0, a]) / (2 * h)
            assert div == pytest.approx(ex.f(p[None, :])[0], rel=1e-7)


class TestErrorMetrics:
    def test_exact_injection_gives_zero(self):
        mesh = meshgen.build_uniform_cartesian(2, 3, (0.0, 1.0))
        uex = lambda p: 0.2 + 1.1 * p[:, 0] - 0.7 * p[:, 1]
        spec = core.ProblemSpec(alpha=1.0, beta=np.zeros(2), g_dirichlet=uex)
        sol = core.solve(mesh, spec, core.SolverConfig(degree=1))
        res = harness.scalar_errors(mesh, sol.U, 1, uex)
        assert res["l2"] < 1e-12 and res["linf"] < 1e-12 and res["avg"] < 1e-12

    def test_avg_metric_definition(self):
        # the zero expansion against u measures max_K |int_K u|
        mesh = meshgen.build_uniform_cartesian(2, 2, (0.0, 1.0))
        uex = lambda p: p[:, 0] * p[:, 1]
        zeros = np.zeros((mesh.n_cells, 1))
        res = harness.scalar_errors(mesh, zeros, 0, uex)
        cells = mesh.cell_lower
        exact = max(
            abs((((lo[0] + e[0]) ** 2 - lo[0] ** 2) / 2) * (((lo[1] + e[1]) ** 2 - lo[1] ** 2) / 2))
            for lo, e in zip(mesh.cell_lower, mesh.cell_extent))
        assert res["avg"] == pytest.approx(exact, rel=1e-12)

    def test_linf_uses_six_point_tensor_nodes(self, monkeypatch):
        mesh = meshgen.build_uniform_cartesian(2, 2, (0.0, 1.0))
        seen = []
        orig = harness._plain_ref_rule

        def spy(dim, n):
            seen.append((dim, n))
            return orig(dim, n)

        monkeypatch.setattr(harness, "_plain_ref_rule", spy)
        harness.scalar_errors(mesh, np.zeros((4, 1)), 0, lambda p: p[:, 0])
        assert (2, 6) in seen  # 6^d sampling nodes for the Linf metric


class TestRates:
    def test_halving_examples(self):
        rates = harness.compute_rates([1e-2, 5e-3], [0.1, 0.05])
        assert rates[1] == pytest.approx(1.0)
        rates = harness.compute_rates([1.0, 1.0 / 8.0], [0.1, 0.05])
        assert rates[1] == pytest.approx(3.0)

    def test_constant_errors_rate_zero(self):
        rates = harness.compute_rates([0.5, 0.5, 0.5], [0.4, 0.2, 0.1])
        np.testing.assert_allclose(rates[1:], 0.0)

    def test_zero_errors_marked_undefined(self):
        rates = harness.compute_rates([1e-3, 0.0], [0.1, 0.05])
        assert np.isnan(rates[1])


class TestPinConfig:
    def test_thermal_voltage_band(self):
        cfg = harness.PinConfig()
        assert cfg.u_thermal == pytest.approx(0.02585, rel=1e-2)

    def test_doping_profile(self):
        cfg = harness.PinConfig()
        ell = cfg.length
        x = np.array([0.1, 0.34, 0.5, 0.67, 0.99]) * ell
        c = cfg.doping(x)
        assert c[0] == cfg.n_d
        assert c[1] == 0.0 and c[2] == 0.0
        assert c[3] == -cfg.n_a and c[4] == -cfg.n_a

    def test_json_round_trip(self, tmp_path):
        cfg = harness.PinConfig()
        path = tmp_path / "pin.json"
        cfg.to_json(path)
        loaded = harness.PinConfig.from_json(path)
        assert loaded == cfg
        keys = set(json.loads(path.read_text()))
        assert {"length", "temperature", "eps_s", "n_v", "e_v", "n_c", "e_c",
                "mu_p", "n_a", "n_d", "q", "k_b"} == keys

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            harness.PinConfig(n_c=-1.0)


class TestNeutrality:
    def test_residual_tolerance(self):
        cfg = harness.PinConfig()
        ut = cfg.u_thermal
        for c_dop in (cfg.n_d, 0.0, -cfg.n_a, 3.3e21):
            psi = harness.neutrality_potential(cfg, c_dop)
            t1 = cfg.n_v * np.exp((cfg.e_v - psi) / ut)
            t2 = cfg.n_c * np.exp((psi - cfg.e_c) / ut)
            assert abs(t1 - t2 + c_dop) <= 1e-13 * max(t1, t2, abs(c_dop))

    def test_intrinsic_closed_form(self):
        cfg = harness.PinConfig()
        psi = harness.neutrality_potential(cfg, 0.0)
        expected = (cfg.e_c + cfg.e_v) / 2 + cfg.u_thermal / 2 * np.log(cfg.n_v / cfg.n_c)
        assert psi == pytest.approx(expected, rel=1e-12)


class TestNonlinearPoisson:
    def test_intrinsic_device_constant_potential(self):
        class Intrinsic(harness.PinConfig):
            def doping(self, x):
                return np.zeros_like(np.asarray(x, dtype=np.float64))

        cfg = Intrinsic()
        nodes = np.linspace(0.0, cfg.length, 41)
        psi = harness.solve_nonlinear_poisson(nodes, cfg)
        expected = (cfg.e_c + cfg.e_v) / 2 + cfg.u_thermal / 2 * np.log(cfg.n_v / cfg.n_c)
        assert np.ptp(psi) == 0.0
        assert psi[0] == pytest.approx(expected, rel=1e-12)

    def test_jacobian_against_finite_differences(self):
        cfg = harness.PinConfig()
        nodes = meshgen.pin_reference_breakpoints(1) * (cfg.length / 6.0)
        nodes_t = nodes / cfg.length
        centers = 0.5 * (nodes[:-1] + nodes[1:])
        cc = cfg.doping(centers) / cfg.n_c
        rng = np.random.default_rng(1)
        psi_t = np.linspace(50.0, 1.0, nodes.size) + 0.1 * rng.standard_normal(nodes.size)
        ab = harness._poisson_jacobian_banded(psi_t, nodes_t, cfg)
        n = nodes.size - 2
        J = np.zeros((n, n))
        J[np.arange(n), np.arange(n)] = ab[1]
        J[np.arange(n - 1), np.arange(1, n)] = ab[0, 1:]
        J[np.arange(1, n), np.arange(n - 1)] = ab[2, :-1]
        h = 1e-6
        for col in range(n):
            pp, pm = psi_t.copy(), psi_t.copy()
            pp[col + 1] += h
            pm[col + 1] -= h
            fd = (harness.poisson_residual(pp, nodes_t, cc, cfg)
                  - harness.poisson_residual(pm, nodes_t, cc, cfg)) / (2 * h)
            scale = np.max(np.abs(J[:, col]))
            assert np.max(np.abs(fd - J[:, col])) / scale < 1e-6

    def test_boundary_values_are_neutral(self):
        cfg = harness.PinConfig()
        nodes = meshgen.pin_reference_breakpoints(2) * (cfg.length / 6.0)
        psi = harness.solve_nonlinear_poisson(nodes, cfg)
        assert psi[0] == pytest.approx(harness.neutrality_potential(cfg, cfg.n_d), rel=1e-12)
        assert psi[-1] == pytest.approx(harness.neutrality_potential(cfg, -cfg.n_a), rel=1e-12)

    def test_nondimensionalization_round_trip(self):
        cfg = harness.PinConfig()
        nodes = meshgen.pin_reference_breakpoints(1) * (cfg.length / 6.0)
        psi = harness.solve_nonlinear_poisson(nodes, cfg)
        ut = cfg.u_thermal
        back = (psi / ut) * ut
        assert np.max(np.abs(back - psi)) <= 1e-12 * np.max(np.abs(psi))
        p = cfg.n_v * np.exp((cfg.e_v - psi) / ut)
        p_back = (p / cfg.n_c) * cfg.n_c
        assert np.max(np.abs(p_back - p)) <= 1e-12 * np.max(np.abs(p))


class TestConvergenceDriver:
    def test_report_and_csv(self, tmp_path):
        rep = harness.run_convergence(degree=1, levels=2, beta=(4.0, 4.0))
        assert rep.cells == [16, 64]
        assert rep.dofs_volume == [16 * 12, 64 * 12]
        assert set(rep.errors) >= {"u_l2", "j_l2", "u_linf", "u_avg", "ustar_l2"}
        path = tmp_path / "conv.csv"
        harness.write_convergence_csv([rep], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("degree,method,level")
        assert len(lines) == 1 + len(rep.errors) * 2

    def test_degree_zero_skips_postprocessing(self):
        rep = harness.run_convergence(degree=0, levels=1)
        assert "ustar_l2" not in rep.errors

    def test_rejects_unknown_method(self):
        with pytest.raises(ValueError):
            harness.run_convergence(degree=0, levels=1, method="fdm")


@pytest.fixture(scope="module")
def small_report():
    # level-4 reference keeps this fast; the acceptance suite runs the
    # production configuration
    return harness.run_pin_benchmark(levels=2, reference_level=4,
                                     reference_refines=2)


class TestPinBenchmark:
    def test_cell_counts(self, small_report):
        assert small_report.cells == [18, 36]

    def test_positivity_pattern(self, small_report):
        assert min(small_report.min_values["fvm"]) >= 0.0
        assert min(small_report.min_values["whdg"]) >= 0.0
        assert min(small_report.min_values["hdg"]) < 0.0

    def test_errors_decrease(self, small_report):
        for method in ("fvm", "hdg", "whdg"):
            errs = small_report.errors[method]
            assert errs[1] < errs[0]

    def test_csv_deterministic(self, tmp_path):
        rep1 = harness.run_pin_benchmark(levels=1, reference_level=3,
                                         reference_refines=1)
        rep2 = harness.run_pin_benchmark(levels=1, reference_level=3,
                                         reference_refines=1)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        harness.write_pin_csv(rep1, p1)
        harness.write_pin_csv(rep2, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_constant_potential_gives_linear_interpolant(self):
        # pure diffusion limit: with a flat potential the hole density is the
        # linear interpolant of its boundary values at the nodes
        nodes_t = np.linspace(0.0, 1.0, 13)
        beta = np.zeros(12)
        vals_fvm = harness._solve_hole_density(nodes_t, beta, (2.0, 5.0), "fvm")[1]
        np.testing.assert_allclose(vals_fvm, 2.0 + 3.0 * nodes_t, rtol=1e-12)
        trace = harness._solve_hole_density(nodes_t, beta, (2.0, 5.0), "whdg",
                                            tau=1e-8)[1]
        np.testing.assert_allclose(trace, 2.0 + 3.0 * nodes_t, rtol=1e-6)
