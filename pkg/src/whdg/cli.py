"""Command-line entry points: convergence studies, the p-i-n benchmark,
quadrature diagnostics and the Scharfetter-Gummel comparison."""

import argparse
import sys

import numpy as np

from . import core, harness, meshgen, sgfv, wquad


def _cmd_converge(args):
    beta = tuple(float(v) for v in args.beta.split(","))
    if len(beta) != 2:
        raise SystemExit("--beta expects two comma-separated values")
    reports = []
    for degree in args.degree:
        rep = harness.run_convergence(degree=degree, levels=args.levels, beta=beta,
                                      tau=args.tau, method=args.method)
        reports.append(rep)
        print(f"# degree {degree} ({args.method}), beta={beta}, tau={args.tau}")
        for key in sorted(rep.errors):
            rates = " ".join(
                "   -  " if np.isnan(r) else f"{r:6.3f}" for r in rep.rates[key])
            print(f"  {key:14s} final={rep.errors[key][-1]:.6e}  rates: {rates}")
    if args.out:
        harness.write_convergence_csv(reports, args.out)
        print(f"wrote {args.out}")


def _cmd_pin(args):
    config = harness.PinConfig.from_json(args.config) if args.config else harness.PinConfig()
    report = harness.run_pin_benchmark(levels=args.levels, config=config, tau_si=args.tau)
    for i, level in enumerate(report.levels):
        for method in ("fvm", "hdg", "whdg"):
            rate = report.rates[method][i]
            print(f"level {level} cells {report.cells[i]:5d} {method:4s} "
                  f"err={report.errors[method][i]:.4e} "
                  f"rate={'  -  ' if np.isnan(rate) else f'{rate:5.2f}'} "
                  f"min={report.min_values[method][i]:+.3e} "
                  f"post={report.post_errors[method][i]:.4e}")
    if args.out:
        harness.write_pin_csv(report, args.out)
        print(f"wrote {args.out}")


def _cmd_sg_compare(args):
    nodes = np.linspace(0.0, 1.0, args.cells + 1)
    system = sgfv.assemble_sg(nodes, 1.0, args.beta, (0.0, 0.0))
    dense_sg = system.dense_matrix()
    mesh = meshgen.build_tensor_mesh([nodes])
    spec = core.ProblemSpec(alpha=1.0, beta=np.array([args.beta]))
    config = core.SolverConfig(degree=0, tau=args.tau)
    dense_tr = core.trace_matrix(mesh, spec, config)
    mask = dense_sg != 0.0
    rel = np.max(np.abs(dense_tr - dense_sg)[mask] / np.abs(dense_sg)[mask])
    print(f"cells={args.cells} beta={args.beta} tau={args.tau:g} "
          f"max entrywise relative difference = {rel:.6e}")


def _cmd_quad_check(args):
    print("b,n,m,relative_error")
    for b in (0.0, 1.0, -1.0, 10.0, -10.0, 50.0, -50.0):
        for n in range(1, 7):
            for m, err in wquad.moment_errors(b, n):
                print(f"{b:g},{n},{m},{err:.16g}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="whdg",
        description="Weighted hybridizable DG solver for drift-diffusion problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("converge", help="manufactured-solution convergence study")
    p.add_argument("--degree", type=int, nargs="+", default=[1])
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--beta", type=str, default="10,10")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--method", choices=("whdg", "hdg"), default="whdg")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=_cmd_converge)

    p = sub.add_parser("pin", help="p-i-n equilibrium hole-density benchmark")
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--config", type=str, default=None,
                   help="JSON file with device constants (SI units)")
    p.add_argument("--tau", type=float, default=1.0,
                   help="hybrid stabilization in SI units")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=_cmd_pin)

    p = sub.add_parser("sg-compare",
                       help="Scharfetter-Gummel vs small-tau trace matrix")
    p.add_argument("--cells", type=int, default=8)
    p.add_argument("--beta", type=float, default=5.0)
    p.add_argument("--tau", type=float, default=1e-10)
    p.set_defaults(func=_cmd_sg_compare)

    p = sub.add_parser("quad-check", help="weighted-quadrature moment table (CSV)")
    p.set_defaults(func=_cmd_quad_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
