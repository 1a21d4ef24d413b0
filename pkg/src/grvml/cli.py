"""Command-line front end: ``grvml {solve,verify,experiment,example}``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
3 verification failure.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import montecarlo, published
from .errors import NUMERIC_ERRORS, DegenerateCase, GrvmlError
from .estimator import SolverOptions, neg_log_likelihood, solve
from .model import load_instance, load_solution, save_solution
from .verify import grid_minimize, kkt_check

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3
VERIFY_SCHEMA = "grvml.verify-report/1"
GRID_SLACK = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for numeric failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v) -> str:
    if v is None:
        return "none"
    return repr(float(v))


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _options(args) -> SolverOptions:
    base = SolverOptions()
    return SolverOptions(
        rank_tol_rel=args.rank_tol if args.rank_tol is not None else base.rank_tol_rel,
        bisect_tol_g_abs=args.tol_g if args.tol_g is not None else base.bisect_tol_g_abs,
        bisect_tol_nu_rel=args.tol_nu if args.tol_nu is not None else base.bisect_tol_nu_rel,
        max_bisect_iters=args.max_iter if args.max_iter is not None else base.max_bisect_iters,
        sign_convention_free=args.free_sign,
        free_mass_allocation=args.alloc,
    )


def _add_solver_flags(p):
    p.add_argument("--tol-g", type=float, help="absolute tolerance on g(nu)")
    p.add_argument("--tol-nu", type=float, help="relative bracket width tolerance")
    p.add_argument("--max-iter", type=int, help="bisection iteration cap")
    p.add_argument("--free-sign", type=int, choices=(1, -1), default=1,
                   help="sign given to the null-space components")
    p.add_argument("--alloc", choices=("FirstIndex", "Uniform"), default="FirstIndex",
                   help="how leftover mass is spread over null-space components")
    p.add_argument("--rank-tol", type=float, help="relative singular value cutoff for the rank")


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    sol = solve(inst, _options(args))
    save_solution(sol, args.out)
    print(f"case={sol.case_tag.value}")
    print(f"nu_star={_fmt(sol.nu_star)}")
    print(f"S={_fmt(sol.certificate.S_value)}")
    print(f"objective={_fmt(sol.objective_value)}")
    print(f"multiplicity={sol.multiplicity.kind}")
    return EXIT_OK


def cmd_verify(args) -> int:
    inst = load_instance(args.instance)
    opts = _options(args)
    sol = load_solution(args.against) if args.against else solve(inst, opts)
    if sol.x_hat.shape != (inst.N,):
        raise UsageError(f"solution has {sol.x_hat.shape[0]} entries, instance has N={inst.N}")
    report = {"schema": VERIFY_SCHEMA, "instance": str(args.instance),
              "case": sol.case_tag.value}
    passed = True
    try:
        kkt = kkt_check(sol, inst, args.tol_kkt, opts)
        report["kkt"] = dict(kkt.to_json(), status="passed" if kkt.passed else "failed")
        passed &= kkt.passed
    except DegenerateCase as exc:
        report["kkt"] = {"status": "skipped", "reason": str(exc)}

    f_sol = neg_log_likelihood(inst, sol.x_hat)
    if inst.N > 3:
        report["grid"] = {"status": "skipped", "reason": f"N={inst.N} > 3"}
    else:
        x_grid, f_grid = grid_minimize(inst, args.grid_halfwidth, args.grid_points)
        ok = bool(f_sol <= f_grid + GRID_SLACK)
        report["grid"] = {"status": "passed" if ok else "failed", "objective_solution": f_sol,
                          "objective_grid": f_grid, "x_grid": x_grid.tolist(), "slack": GRID_SLACK}
        passed &= ok
    report["passed"] = bool(passed)
    print(json.dumps(report, indent=2))
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_experiment(args) -> int:
    overrides = dict(M=args.M, N=args.N, sigma_e2=args.sigma_e2, sigma_eps2=args.sigma_eps2,
                     kappa=args.kappa, snr_grid_db=args.snr_grid, M_grid=args.m_grid,
                     estimators=args.estimators)
    if args.no_crb:
        overrides["emit_crb"] = False
    try:
        config = montecarlo.preset_config(args.preset, seed=args.seed, trials=args.trials, **overrides)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc

    def progress(point, done, total):
        print(f"[{done}/{total}] {config.preset} {point.param}={point.value:g} done", file=sys.stderr)

    result = montecarlo.run_experiment(config, progress=progress)
    csv_path, json_path = montecarlo.write_outputs(result, args.out)
    rate = result.summary["failure_rate"]
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    print(f"failed_trials={result.summary['failed_trials']} failure_rate={rate:.4f}")
    return EXIT_NUMERIC if rate > 0.01 else EXIT_OK


def cmd_example(args) -> int:
    rows = published.compare_example(args.id)
    print(f"{'quantity':<34}{'reference':>12}{'computed':>14}{'|delta|':>12}  ok")
    for r in rows:
        print(f"{r.label:<34}{r.reference:>12.4f}{r.computed:>14.4f}{r.delta:>12.4f}  "
              f"{'yes' if r.ok() else 'NO'}")
    if args.id in published.EXAMPLES:
        ex = published.EXAMPLES[args.id]
        sol = solve(ex.instance, ex.options)
        print(f"case={sol.case_tag.value} (reference {ex.case.value}) optima={len(ex.x_hat)} "
              f"multiplicity={sol.multiplicity.kind}")
        if sol.case_tag is not ex.case:
            return EXIT_VERIFY
    return EXIT_OK if all(r.ok() for r in rows) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="grvml", description="ML estimation for y = (H + E) x + eps with Gaussian E")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one instance file")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="KKT and grid checks for an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--against", help="solution file to check instead of a fresh solve")
    p.add_argument("--grid-halfwidth", type=float)
    p.add_argument("--grid-points", type=int, default=201)
    p.add_argument("--tol-kkt", type=float, default=1e-8)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("experiment", help="run a seeded Monte-Carlo preset")
    p.add_argument("--preset", required=True, choices=montecarlo.PRESETS)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--trials", type=int)
    p.add_argument("--out", default=".")
    p.add_argument("--M", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--sigma-e2", type=float)
    p.add_argument("--sigma-eps2", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--snr-grid", type=_float_list, help="comma-separated dB values")
    p.add_argument("--m-grid", type=_int_list, help="comma-separated row counts")
    p.add_argument("--estimators", type=lambda s: tuple(s.split(",")),
                   help=f"comma-separated subset of {','.join(montecarlo.ESTIMATORS)}")
    p.add_argument("--no-crb", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("example", help="reproduce a built-in worked example")
    p.add_argument("--id", required=True, choices=(*published.EXAMPLES, "fig1"))
    p.set_defaults(func=cmd_example)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"grvml: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"grvml: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GrvmlError, ValueError) as exc:
        print(f"grvml: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
