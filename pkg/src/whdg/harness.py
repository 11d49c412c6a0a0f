"""Experiment drivers: convergence studies and the p-i-n benchmark.

The 2d study solves a boundary-layer problem with a known solution on a
sequence of uniform grids, measures L2 / Linf / cell-average errors for
the solution, the flux and every postprocessed field, and reports observed
orders against the mesh size.

The 1d benchmark computes the thermodynamic-equilibrium hole density of a
p-i-n device: a damped-Newton solve of the nonlinear Poisson equation on a
very fine graded grid provides the electrostatic potential, whose negative
slope becomes the cellwise-constant drift for the hole transport equation.
The transport problem is then solved on a hierarchy of graded grids with
the Scharfetter-Gummel finite volume scheme, classical HDG and weighted
HDG, and compared against a fine-grid reference, including the discrete
maximum principle and piecewise-linear postprocessing.

All benchmark algebra runs in nondimensional units (lengths over the
device length, potentials over the thermal voltage, densities over the
conduction-band density), which keeps every exponent within floating
range; results are rescaled on output.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from . import core, meshgen, postproc, sgfv, wquad
from .meshgen import Mesh

# ---------------------------------------------------------------------------
# manufactured boundary-layer solution
# ---------------------------------------------------------------------------

class Manufactured2D:
    """Product-form solution on the unit square vanishing on the boundary.

    Each axis carries the profile x * (1 - e^{(x-1) b}) / (1 - e^{-b}),
    which develops a layer at x = 1 for large positive b; the b -> 0 limit
    of the profile factor is (1 - x).  The source term follows from
    applying the drift-diffusion operator analytically.
    """

    def __init__(self, beta, alpha=1.0):
        self.beta = np.asarray(beta, dtype=np.float64)
        self.alpha = float(alpha)

    def _profile(self, x, b):
        """p, p', p'' of the per-axis factor."""
        if abs(b) < 1e-8:
            return x * (1.0 - x), 1.0 - 2.0 * x, -2.0 * np.ones_like(x)
        den = np.expm1(-b)
        e = np.expm1((x - 1.0) * b)
        ex = e + 1.0
        p = x * e / den
        dp = (e + x * b * ex) / den
        ddp = (2.0 * b * ex + x * b * b * ex) / den
        return p, dp, ddp

    def u(self, points):
        pts = np.atleast_2d(points)
        p1, _, _ = self._profile(pts[:, 0], self.beta[0])
        p2, _, _ = self._profile(pts[:, 1], self.beta[1])
        return p1 * p2

    def flux(self, points):
        """Total flux -alpha grad u + beta u, shape (n, 2)."""
        pts = np.atleast_2d(points)
        p1, d1, _ = self._profile(pts[:, 0], self.beta[0])
        p2, d2, _ = self._profile(pts[:, 1], self.beta[1])
        u = p1 * p2
        return np.column_stack([
            -self.alpha * d1 * p2 + self.beta[0] * u,
            -self.alpha * p1 * d2 + self.beta[1] * u,
        ])

    def f(self, points):
        pts = np.atleast_2d(points)
        p1, d1, dd1 = self._profile(pts[:, 0], self.beta[0])
        p2, d2, dd2 = self._profile(pts[:, 1], self.beta[1])
        lap = dd1 * p2 + p1 * dd2
        conv = self.beta[0] * d1 * p2 + self.beta[1] * p1 * d2
        return -self.alpha * lap + conv


def manufactured_2d(beta, alpha=1.0) -> Manufactured2D:
    return Manufactured2D(beta, alpha)


# ---------------------------------------------------------------------------
# error metrics and rates
# ---------------------------------------------------------------------------

def _plain_ref_rule(dim, n):
    r = wquad.gauss_legendre(n)
    if dim == 1:
        return r.nodes[:, None], r.weights
    ref = np.column_stack([
        np.repeat(r.nodes, n), np.tile(r.nodes, n),
    ])
    w = np.repeat(r.weights, n) * np.tile(r.weights, n)
    return ref, w


def _phys_points(mesh, ref):
    return (mesh.cell_lower[:, None, :] +
            ref[None, :, :] * mesh.cell_extent[:, None, :])


def scalar_errors(mesh: Mesh, coeffs, degree, exact_u, linf_points=6):
    """L2, Linf and largest cell-average error of a per-cell expansion.

    The Linf error is sampled on the tensor Gauss points of order
    ``linf_points`` per axis, the L2/average metrics use a rule exact for
    the expansion degree plus a margin.
    """
    n_l2 = max(degree + 3, 6)
    ref, w = _plain_ref_rule(mesh.dim, n_l2)
    measures = mesh.cell_measure()
    uex = np.asarray(exact_u(_phys_points(mesh, ref).reshape(-1, mesh.dim)))
    uex = uex.reshape(mesh.n_cells, -1)
    uh = core.eval_scalar(mesh, coeffs, degree, ref)
    diff = uex - uh
    l2 = math.sqrt(float(np.einsum("cq,q,c->", diff**2, w, measures)))
    avg = float(np.max(np.abs(np.einsum("cq,q,c->c", diff, w, measures))))

    ref_i, _ = _plain_ref_rule(mesh.dim, linf_points)
    uex_i = np.asarray(exact_u(_phys_points(mesh, ref_i).reshape(-1, mesh.dim)))
    uh_i = core.eval_scalar(mesh, coeffs, degree, ref_i)
    linf = float(np.max(np.abs(uex_i.reshape(mesh.n_cells, -1) - uh_i)))
    return {"l2": l2, "linf": linf, "avg": avg}


def vector_errors(mesh: Mesh, coeffs, degree, exact_flux):
    """L2 error of a componentwise expanded vector field."""
    n_l2 = max(degree + 3, 6)
    ref, w = _plain_ref_rule(mesh.dim, n_l2)
    measures = mesh.cell_measure()
    jex = np.asarray(exact_flux(_phys_points(mesh, ref).reshape(-1, mesh.dim)))
    jex = jex.reshape(mesh.n_cells, -1, mesh.dim).transpose(0, 2, 1)
    jh = core.eval_vector(mesh, coeffs, degree, ref)
    diff2 = np.sum((jex - jh) ** 2, axis=1)
    return math.sqrt(float(np.einsum("cq,q,c->", diff2, w, measures)))


def rt_errors(mesh: Mesh, rt_field, exact_flux, exact_div):
    """L2 errors of a Raviart-Thomas field and of its divergence."""
    n_l2 = max(rt_field.degree + 4, 6)
    ref, w = _plain_ref_rule(mesh.dim, n_l2)
    measures = mesh.cell_measure()
    pts = _phys_points(mesh, ref).reshape(-1, mesh.dim)
    jex = np.asarray(exact_flux(pts)).reshape(mesh.n_cells, -1, mesh.dim).transpose(0, 2, 1)
    jh = postproc.eval_rt(mesh, rt_field, ref)
    diff2 = np.sum((jex - jh) ** 2, axis=1)
    l2 = math.sqrt(float(np.einsum("cq,q,c->", diff2, w, measures)))
    dex = np.asarray(exact_div(pts)).reshape(mesh.n_cells, -1)
    dh = postproc.eval_rt_div(mesh, rt_field, ref)
    l2div = math.sqrt(float(np.einsum("cq,q,c->", (dex - dh) ** 2, w, measures)))
    return {"l2": l2, "l2_div": l2div}


def compute_rates(errors, hs):
    """Observed orders log(e_{j+1}/e_j) / log(h_{j+1}/h_j); nan where undefined."""
    errors = np.asarray(errors, dtype=np.float64)
    hs = np.asarray(hs, dtype=np.float64)
    rates = np.full(errors.shape[0], np.nan)
    for j in range(1, errors.shape[0]):
        if errors[j] > 0 and errors[j - 1] > 0:
            rates[j] = math.log(errors[j] / errors[j - 1]) / math.log(hs[j] / hs[j - 1])
        elif errors[j] == 0 and errors[j - 1] == 0:
            rates[j] = 0.0
    return rates


# ---------------------------------------------------------------------------
# 2d convergence study
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    degree: int
    method: str
    levels: list
    cells: list
    dofs_volume: list
    dofs_trace: list
    hs: list
    errors: dict            # metric -> list of errors
    rates: dict = field(default_factory=dict)

    def finalize(self):
        for key, vals in self.errors.items():
            self.rates[key] = compute_rates(vals, self.hs).tolist()
        return self


def run_convergence(degree: int, levels: int, beta=(10.0, 10.0), tau=1.0,
                    method: str = "whdg", alpha: float = 1.0) -> ConvergenceReport:
    """Uniform-grid study on the unit square; level j has (2^{j+1})^2 cells.

    ``method`` selects the weighted scheme ("whdg") or the classical
    baseline ("hdg").  Postprocessed fields are measured for degree >= 1.
    """
    if method not in ("whdg", "hdg"):
        raise ValueError("method must be 'whdg' or 'hdg'")
    if not 1 <= levels <= 6:
        raise ValueError("levels must be between 1 and 6 (up to 16384 cells)")
    exact = manufactured_2d(beta, alpha)
    mode = core.WeightMode.CENTERED if method == "whdg" else core.WeightMode.UNWEIGHTED
    spec = core.ProblemSpec(alpha=alpha, beta=np.asarray(beta, dtype=np.float64),
                            f=exact.f, g_dirichlet=0.0)
    report = ConvergenceReport(degree=degree, method=method, levels=[], cells=[],
                               dofs_volume=[], dofs_trace=[], hs=[], errors={})

    def push(key, value):
        report.errors.setdefault(key, []).append(value)

    for level in range(1, levels + 1):
        n = 2 ** (level + 1)
        mesh = meshgen.build_uniform_cartesian(2, n, (0.0, 1.0))
        config = core.SolverConfig(degree=degree, tau=tau, weight_mode=mode)
        try:
            sol = core.solve(mesh, spec, config)
        except Exception as exc:
            raise core.SolveError(
                f"level {level} ({mesh.n_cells} cells, degree {degree}): {exc}") from exc
        m = (degree + 1) ** 2
        report.levels.append(level)
        report.cells.append(mesh.n_cells)
        report.dofs_volume.append(3 * m * mesh.n_cells)
        report.dofs_trace.append((degree + 1) * mesh.n_faces)
        report.hs.append(math.sqrt(2.0) / n)

        se = scalar_errors(mesh, sol.U, degree, exact.u)
        push("u_l2", se["l2"])
        push("u_linf", se["linf"])
        push("u_avg", se["avg"])
        push("j_l2", vector_errors(mesh, sol.J, degree, exact.flux))

        if degree >= 1:
            ustar = postproc.l2min_postprocess(sol, spec)
            es = scalar_errors(mesh, ustar.coeffs, ustar.degree, exact.u)
            push("ustar_l2", es["l2"])
            push("ustar_linf", es["linf"])
            jdiv = postproc.flux_reconstruction(sol, spec)
            re = rt_errors(mesh, jdiv, exact.flux, exact.f)
            push("jdiv_l2", re["l2"])
            push("jdiv_div_l2", re["l2_div"])
            ustar2 = postproc.local_resolve(sol, spec, jdiv)
            es2 = scalar_errors(mesh, ustar2.coeffs, ustar2.degree, exact.u)
            push("uresolve_l2", es2["l2"])
            push("uresolve_linf", es2["linf"])
    return report.finalize()


def write_convergence_csv(reports, path) -> None:
    """Long-format CSV: one row per (degree, level, metric)."""
    with open(path, "w") as fh:
        fh.write("degree,method,level,cells,dofs_volume,dofs_trace,h,metric,error,rate\n")
        for rep in reports:
            for key in sorted(rep.errors):
                for i, level in enumerate(rep.levels):
                    rate = rep.rates[key][i]
                    rate_s = "" if math.isnan(rate) else f"{rate:.16g}"
                    fh.write(
                        f"{rep.degree},{rep.method},{level},{rep.cells[i]},"
                        f"{rep.dofs_volume[i]},{rep.dofs_trace[i]},{rep.hs[i]:.16g},"
                        f"{key},{rep.errors[key][i]:.16g},{rate_s}\n"
                    )


# ---------------------------------------------------------------------------
# p-i-n benchmark configuration
# ---------------------------------------------------------------------------

@dataclass
class PinConfig:
    """Physical constants of the 1d p-i-n device (SI units; energies in eV)."""

    length: float = 6.0e-6
    temperature: float = 300.0
    eps_s: float = 1.14219022847298e-10
    n_v: float = 9.139615903601645e24
    e_v: float = 0.0
    n_c: float = 4.351959895879690e23
    e_c: float = 1.424
    mu_p: float = 4.0e-2
    n_a: float = 4.204223315656757e24
    n_d: float = 4.351959895879690e23
    q: float = 1.602176634e-19
    k_b: float = 1.380649e-23

    def __post_init__(self):
        for name in ("length", "temperature", "eps_s", "n_v", "n_c", "mu_p",
                     "n_a", "n_d", "q", "k_b"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def u_thermal(self) -> float:
        """Thermal voltage k_B T / q in volts."""
        return self.k_b * self.temperature / self.q

    def doping(self, x) -> np.ndarray:
        """Doping profile: donors on the left third, acceptors on the right."""
        x = np.asarray(x, dtype=np.float64)
        c = np.zeros_like(x)
        c[x < self.length / 3.0] = self.n_d
        c[x >= 2.0 * self.length / 3.0] = -self.n_a
        return c

    @classmethod
    def from_json(cls, path) -> "PinConfig":
        with open(path) as fh:
            return cls(**json.load(fh))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)


# ---------------------------------------------------------------------------
# nonlinear Poisson solve (thermodynamic equilibrium)
# ---------------------------------------------------------------------------

def neutrality_potential(config: PinConfig, c_dop: float) -> float:
    """Electrostatic potential (volts) nulling the space charge.

    Solves N_v e^{(E_v - q psi)/kT} - N_c e^{(q psi - E_c)/kT} + C = 0 by a
    bisection-safeguarded Newton iteration on the nondimensional potential,
    to a relative residual of 1e-13.
    """
    ut = config.u_thermal
    ev = config.e_v / ut          # e_v is in eV: E_v/q has units volts
    ec = config.e_c / ut
    nv = config.n_v / config.n_c
    cd = c_dop / config.n_c

    def f_and_scale(y):
        t1 = nv * math.exp(ev - y)
        t2 = math.exp(y - ec)
        return t1 - t2 + cd, max(t1, t2, abs(cd), 1e-300)

    # monotone decreasing; bracket around the intrinsic level
    y = 0.5 * (ev + ec) + 0.5 * math.log(nv)
    span = 1.0
    lo, hi = y - span, y + span
    while f_and_scale(lo)[0] < 0:
        lo -= span
        span *= 2
    span = 1.0
    while f_and_scale(hi)[0] > 0:
        hi += span
        span *= 2

    y = 0.5 * (lo + hi)
    for _ in range(200):
        fv, scale = f_and_scale(y)
        if abs(fv) <= 1e-13 * scale:
            break
        if fv > 0:
            lo = y
        else:
            hi = y
        dfv = -nv * math.exp(ev - y) - math.exp(y - ec)
        step = -fv / dfv
        y_new = y + step
        if not (lo < y_new < hi):
            y_new = 0.5 * (lo + hi)
        y = y_new
    return y * ut


def _poisson_scales(config: PinConfig):
    ut = config.u_thermal
    delta = config.eps_s * ut / (config.q * config.n_c * config.length**2)
    return {
        "ut": ut,
        "delta": delta,
        "ev": config.e_v / ut,
        "ec": config.e_c / ut,
        "nv": config.n_v / config.n_c,
    }


def poisson_residual(psi_t, nodes_t, c_cells_t, config: PinConfig, with_scale=False):
    """Nondimensional finite-volume residual of the equilibrium Poisson
    equation at the interior nodes (Dirichlet values included in psi_t)."""
    s = _poisson_scales(config)
    h = np.diff(nodes_t)
    flux = s["delta"] * np.diff(psi_t) / h
    holes = s["nv"] * np.exp(s["ev"] - psi_t[1:-1])
    electrons = np.exp(psi_t[1:-1] - s["ec"])
    cv = 0.5 * (h[:-1] + h[1:])
    dope = 0.5 * (h[:-1] * c_cells_t[:-1] + h[1:] * c_cells_t[1:])
    res = -(flux[1:] - flux[:-1]) - cv * (holes - electrons) - dope
    if not with_scale:
        return res
    scale = float(np.linalg.norm(np.abs(flux[1:]) + np.abs(flux[:-1])
                                 + cv * (holes + electrons) + np.abs(dope)))
    return res, scale


def _poisson_jacobian_banded(psi_t, nodes_t, config: PinConfig):
    s = _poisson_scales(config)
    h = np.diff(nodes_t)
    n = psi_t.shape[0] - 2
    cv = 0.5 * (h[:-1] + h[1:])
    dcharge = -s["nv"] * np.exp(s["ev"] - psi_t[1:-1]) - np.exp(psi_t[1:-1] - s["ec"])
    ab = np.zeros((3, n))
    ab[1] = s["delta"] * (1.0 / h[:-1] + 1.0 / h[1:]) - cv * dcharge
    ab[0, 1:] = -s["delta"] / h[1:-1]
    ab[2, :-1] = -s["delta"] / h[1:-1]
    return ab


def solve_nonlinear_poisson(nodes, config: PinConfig, max_steps=100, tol=1e-10):
    """Equilibrium electrostatic potential (volts) at the given nodes.

    Damped Newton on the nondimensional finite-volume system; boundary
    values come from charge neutrality.  Raises with the residual history
    if not converged within ``max_steps`` damped steps.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    s = _poisson_scales(config)
    ut = s["ut"]
    nodes_t = nodes / config.length
    centers = 0.5 * (nodes[:-1] + nodes[1:])
    c_cells = config.doping(centers)
    c_cells_t = c_cells / config.n_c

    psi_l = neutrality_potential(config, float(c_cells[0])) / ut
    psi_r = neutrality_potential(config, float(c_cells[-1])) / ut

    # local-neutrality initial guess, nodewise
    c_nodes = np.concatenate([[c_cells[0]], 0.5 * (c_cells[:-1] + c_cells[1:]), [c_cells[-1]]])
    psi_t = np.array([neutrality_potential(config, float(c)) for c in c_nodes]) / ut
    psi_t[0], psi_t[-1] = psi_l, psi_r

    history = []
    res, scale = poisson_residual(psi_t, nodes_t, c_cells_t, config, with_scale=True)
    norm0 = max(float(np.linalg.norm(res)), 1e-300)
    floor = 1e-14 * max(scale, 1e-300)
    for step in range(max_steps):
        norm = float(np.linalg.norm(res))
        history.append(norm)
        if norm <= max(tol * norm0, floor):
            return psi_t * ut
        ab = _poisson_jacobian_banded(psi_t, nodes_t, config)
        dpsi = sla.solve_banded((1, 1), ab, -res)
        damping = 1.0
        for _ in range(40):
            trial = psi_t.copy()
            trial[1:-1] += damping * dpsi
            res_trial = poisson_residual(trial, nodes_t, c_cells_t, config)
            if np.linalg.norm(res_trial) < norm:
                psi_t, res = trial, res_trial
                break
            damping *= 0.5
        else:
            raise core.SolveError(f"Poisson line search stalled; history={history}")
    raise core.SolveError(f"Poisson Newton did not converge; history={history}")


# ---------------------------------------------------------------------------
# p-i-n benchmark
# ---------------------------------------------------------------------------

_PIN_METHODS = ("fvm", "hdg", "whdg")


@dataclass
class PinReport:
    levels: list
    cells: list
    errors: dict        # method -> list (SI density units)
    rates: dict
    min_values: dict    # method -> list
    post_errors: dict   # method -> list
    post_rates: dict


def _boundary_hole_values(config, psi_l, psi_r):
    ut = config.u_thermal
    nv = config.n_v / config.n_c
    pl = nv * math.exp((config.e_v - psi_l) / ut)
    pr = nv * math.exp((config.e_v - psi_r) / ut)
    return pl, pr


def _match_indices(coarse, fine):
    idx = np.searchsorted(fine, coarse)
    idx = np.clip(idx, 0, fine.shape[0] - 1)
    left = np.clip(idx - 1, 0, fine.shape[0] - 1)
    use_left = np.abs(fine[left] - coarse) < np.abs(fine[idx] - coarse)
    idx[use_left] = left[use_left]
    if np.any(np.abs(fine[idx] - coarse) > 1e-13 * max(1.0, float(np.max(np.abs(coarse))))):
        raise AssertionError("grids are not nested")
    return idx


def _solve_hole_density(nodes_t, beta_cells, boundary, method, tau=1.0):
    """Nondimensional hole transport solve on one grid; returns
    (cell_values, trace_or_nodal_values, node_positions)."""
    pl, pr = boundary
    if method == "fvm":
        system = sgfv.assemble_sg(nodes_t, 1.0, beta_cells, (pl, pr))
        fv = sgfv.solve_sg(system)
        cells = 0.5 * (fv.values[:-1] + fv.values[1:])
        return cells, fv.values, nodes_t
    mesh = meshgen.build_tensor_mesh([nodes_t])
    mid = 0.5 * (nodes_t[0] + nodes_t[-1])

    def g_d(points):
        return np.where(points[:, 0] < mid, pl, pr)

    spec = core.ProblemSpec(alpha=1.0, beta=beta_cells[:, None], g_dirichlet=g_d)
    mode = core.WeightMode.CENTERED if method == "whdg" else core.WeightMode.UNWEIGHTED
    config = core.SolverConfig(degree=0, tau=tau, weight_mode=mode, residual_tol=1e-8)
    sol = core.solve(mesh, spec, config)
    face_pos = mesh.face_center()[:, 0]
    order = np.argsort(face_pos)
    return sol.U[:, 0], sol.Uhat[order, 0], face_pos[order]


def run_pin_benchmark(levels: int = 5, config: PinConfig | None = None,
                      tau_si: float = 1.0, reference_level: int = 7,
                      reference_refines: int = 4) -> PinReport:
    """Hole-density comparison of FVM / HDG / W-HDG on graded grids.

    ``tau_si`` is the hybrid stabilization in SI units (per meter of flux
    per density unit); the benchmark solves in nondimensional variables,
    where the equivalent value is tau_si * length / U_T.  The reference
    density is the classical-HDG solution on the reference grid (level
    ``reference_level`` refined ``reference_refines`` times);
    piecewise-linear postprocessed fields are compared against the
    reference's own trace interpolant.
    """
    config = config or PinConfig()
    ell = config.length
    ut = config.u_thermal
    tau = tau_si * ell / ut

    ref_nodes = meshgen.bisect_breakpoints(
        meshgen.pin_reference_breakpoints(reference_level) * (ell / 6.0), reference_refines)
    psi = solve_nonlinear_poisson(ref_nodes, config)
    psi_t = psi / ut
    ref_nodes_t = ref_nodes / ell
    h_ref = np.diff(ref_nodes_t)
    beta_ref = -np.diff(psi_t) / h_ref

    boundary = _boundary_hole_values(config, psi[0], psi[-1])
    p_ref_cells, p_ref_trace, ref_pos = _solve_hole_density(
        ref_nodes_t, beta_ref, boundary, "hdg", tau)
    ref_interp = postproc.trace_linear_1d(ref_pos, p_ref_trace)
    ref_mids = 0.5 * (ref_nodes_t[:-1] + ref_nodes_t[1:])
    ref_lin_nodes = ref_interp(ref_nodes_t)
    ref_lin_mids = ref_interp(ref_mids)

    report = PinReport(levels=list(range(1, levels + 1)), cells=[],
                       errors={m: [] for m in _PIN_METHODS},
                       rates={}, min_values={m: [] for m in _PIN_METHODS},
                       post_errors={m: [] for m in _PIN_METHODS}, post_rates={})

    for level in range(1, levels + 1):
        nodes = meshgen.pin_reference_breakpoints(level) * (ell / 6.0)
        nodes_t = nodes / ell
        idx = _match_indices(nodes_t, ref_nodes_t)
        beta_cells = -(psi_t[idx][1:] - psi_t[idx][:-1]) / np.diff(nodes_t)
        parent = np.searchsorted(nodes_t, ref_mids) - 1
        report.cells.append(nodes_t.shape[0] - 1)

        for method in _PIN_METHODS:
            try:
                cells_v, trace_v, pos = _solve_hole_density(nodes_t, beta_cells,
                                                            boundary, method, tau)
            except Exception as exc:
                raise core.SolveError(f"{method} failed on level {level}: {exc}") from exc
            err2 = float(np.sum(h_ref * (cells_v[parent] - p_ref_cells) ** 2))
            report.errors[method].append(math.sqrt(err2) * config.n_c)
            report.min_values[method].append(float(np.min(trace_v)) * config.n_c)

            interp = postproc.trace_linear_1d(pos, trace_v)
            dn = interp(ref_nodes_t) - ref_lin_nodes
            dm = interp(ref_mids) - ref_lin_mids
            perr2 = float(np.sum(h_ref / 6.0 * (dn[:-1] ** 2 + 4 * dm**2 + dn[1:] ** 2)))
            report.post_errors[method].append(math.sqrt(perr2) * config.n_c)

    hs = [1.0 / c for c in report.cells]
    for method in _PIN_METHODS:
        report.rates[method] = compute_rates(report.errors[method], hs).tolist()
        report.post_rates[method] = compute_rates(report.post_errors[method], hs).tolist()
    return report


def write_pin_csv(report: PinReport, path) -> None:
    """Long-format CSV: one row per (level, method, metric)."""
    with open(path, "w") as fh:
        fh.write("level,cells,method,metric,value\n")
        for i, level in enumerate(report.levels):
            for method in _PIN_METHODS:
                rows = [
                    ("l2_error", report.errors[method][i]),
                    ("rate", report.rates[method][i]),
                    ("min_value", report.min_values[method][i]),
                    ("post_l2_error", report.post_errors[method][i]),
                    ("post_rate", report.post_rates[method][i]),
                ]
                for metric, value in rows:
                    value_s = "" if (isinstance(value, float) and math.isnan(value)) \
                        else f"{value:.16g}"
                    fh.write(f"{level},{report.cells[i]},{method},{metric},{value_s}\n")
