"""``junction-hj`` command line: scenario files in, CSV or JSON out.

Exit codes: 0 success, 1 a ``verify`` suite failed, 2 usage error,
3 invalid scenario, 4 a root find did not converge.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .checks import SUITES, CheckOptions, Context, run_suites
from .convex_core import Point
from .errors import ConvergenceError, ScenarioError
from .hopf_lax import N_SCAN, solve_grid
from .minimal_action import action
from .oracle import OracleConfig, brute_force_d0, brute_force_solve
from .scenario import Scenario, load_scenario
from .traffic import density_field, flux_series

EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_SCENARIO = 3
EXIT_CONVERGENCE = 4


def _point(text: str) -> Point:
    try:
        return Point.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v: float) -> str:
    return repr(float(v))


def _solution_rows(sol):
    for k, t in enumerate(sol.times):
        for b, c in enumerate(sol.coords, start=1):
            row = sol.values[b - 1][k]
            for x, u in zip(c, row):
                yield (_fmt(t), b, _fmt(x), _fmt(u))


def _check_points(sc: Scenario, *points: Point) -> None:
    for p in points:
        if not p.is_junction and not 1 <= p.branch <= sc.junction.n:
            raise ScenarioError(f"branch {p.branch} does not exist; the junction has {sc.junction.n} branches")
        if p.coord < 0:
            raise ScenarioError(f"coordinates must be nonnegative, got {p.coord}")


def _times(args) -> None:
    if args.t0 < 0 or args.t1 < args.t0:
        raise ScenarioError(f"need 0 <= t0 <= t1, got t0={args.t0}, t1={args.t1}")


def cmd_action(args) -> int:
    sc = load_scenario(args.scenario)
    _check_points(sc, args.from_, args.to)
    _times(args)
    res = action(sc.junction, args.t0, args.from_, args.t1, args.to)
    d = res.as_dict()
    print(json.dumps({k: d[k] for k in ("value", "regime", "tau1", "tau2")}))
    return 0


def cmd_solve(args) -> int:
    sc = load_scenario(args.scenario)
    sol = solve_grid(sc.junction, sc.datum, sc.times, sc.coords, n_scan=args.n_scan, threads=args.threads)
    _write_csv(Path(args.out), ("t", "branch", "x", "u"), _solution_rows(sol))
    return 0


def cmd_traffic(args) -> int:
    sc = load_scenario(args.scenario)
    if sc.traffic is None:
        raise ScenarioError("the traffic command needs a 'traffic' scenario")
    sol = solve_grid(sc.junction, sc.datum, sc.times, sc.coords, n_scan=args.n_scan, threads=args.threads)
    field = density_field(sc.traffic, sol)
    rows = []
    for k, t in enumerate(field.times):
        for r, (X, rho) in enumerate(zip(field.X, field.rho), start=1):
            rows.extend((_fmt(t), r, _fmt(x), _fmt(v)) for x, v in zip(X, rho[k]))
    out = Path(args.out)
    _write_csv(out, ("t", "road", "X", "rho"), rows)
    flux_out = Path(args.flux_out) if args.flux_out else out.with_name(out.stem + "_flux.csv")
    if sol.times.size >= 3:
        ft, fv = flux_series(sol)
        _write_csv(flux_out, ("t", "junction_flux"), ((_fmt(t), _fmt(v)) for t, v in zip(ft, fv)))
    else:
        print("note: fewer than 3 time rows, no junction_flux series written", file=sys.stderr)
    if field.clamped:
        print(f"note: {field.clamped} densities clamped into [0, rhomax] (max excess {field.max_excess:.2e})", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    sc = load_scenario(args.scenario)
    fields = {f.name for f in dataclasses.fields(CheckOptions)}
    opts = CheckOptions(**{k: v for k, v in vars(args).items() if k in fields and v is not None})
    ctx = Context(sc.junction, sc.datum, sc.traffic, sc.densities, opts)
    try:
        results = run_suites(ctx, args.suite)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_FAIL if failed else 0


def _oracle_cfg(args) -> OracleConfig:
    try:
        return OracleConfig(n_tau=args.n_tau, n_y=args.n_y, radius=args.radius, refine=args.refine)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def cmd_oracle_action(args) -> int:
    sc = load_scenario(args.scenario)
    _check_points(sc, args.from_, args.to)
    _times(args)
    h = args.t1 - args.t0
    if h == 0:
        value = 0.0 if args.from_ == args.to else float("inf")
    else:
        y = Point(args.from_.branch, args.from_.coord / h)
        x = Point(args.to.branch, args.to.coord / h)
        value = h * brute_force_d0(sc.junction, y, x, _oracle_cfg(args))
    print(json.dumps({"value": value}))
    return 0


def cmd_oracle_solve(args) -> int:
    sc = load_scenario(args.scenario)
    cfg = _oracle_cfg(args)
    J, u0 = sc.junction, sc.datum
    rows = []
    for t in sc.times:
        for b, c in enumerate(sc.coords, start=1):
            for x in c:
                if t == 0:
                    u = float(u0.values(b, np.array([x]))[0])
                else:
                    u = brute_force_solve(J, u0, float(t), Point(b, float(x)), cfg)
                rows.append((_fmt(t), b, _fmt(x), _fmt(u)))
    _write_csv(Path(args.out), ("t", "branch", "x", "u"), rows)
    return 0


def _add_scenario(p) -> None:
    p.add_argument("--scenario", required=True, help="scenario JSON file")


def _add_endpoints(p) -> None:
    p.add_argument("--from", dest="from_", type=_point, required=True, metavar="B:COORD")
    p.add_argument("--to", type=_point, required=True, metavar="B:COORD")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=1.0)


def _add_solver(p) -> None:
    p.add_argument("--n-scan", type=int, default=N_SCAN, help="scan points per branch before refinement")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: JUNCTION_HJ_THREADS, 0 = all cores)")


def _add_oracle(p) -> None:
    d = OracleConfig()
    p.add_argument("--n-tau", type=int, default=d.n_tau)
    p.add_argument("--n-y", type=int, default=d.n_y)
    p.add_argument("--radius", type=float, default=d.radius)
    p.add_argument("--refine", type=int, default=d.refine)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="junction-hj", description="Hamilton-Jacobi equations on a junction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("action", help="minimal action between two points, as JSON")
    _add_scenario(p)
    _add_endpoints(p)
    p.set_defaults(func=cmd_action)

    p = sub.add_parser("solve", help="value function on the scenario grid, as CSV")
    _add_scenario(p)
    p.add_argument("--out", required=True)
    _add_solver(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("traffic", help="densities and junction flux of a traffic scenario")
    _add_scenario(p)
    p.add_argument("--out", required=True)
    p.add_argument("--flux-out", default=None, help="junction_flux CSV (default: OUT stem + '_flux.csv')")
    _add_solver(p)
    p.set_defaults(func=cmd_traffic)

    p = sub.add_parser("verify", help="run invariant suites")
    _add_scenario(p)
    p.add_argument("--suite", action="append", choices=list(SUITES), help="repeatable; default all")
    defaults = CheckOptions()
    for f in dataclasses.fields(CheckOptions):
        kind = type(getattr(defaults, f.name))
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=kind, default=None,
                       help=f"default {getattr(defaults, f.name)}")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="brute-force counterparts of action and solve")
    osub = p.add_subparsers(dest="oracle_command", required=True)
    q = osub.add_parser("action")
    _add_scenario(q)
    _add_endpoints(q)
    _add_oracle(q)
    q.set_defaults(func=cmd_oracle_action)
    q = osub.add_parser("solve")
    _add_scenario(q)
    q.add_argument("--out", required=True)
    _add_oracle(q)
    q.set_defaults(func=cmd_oracle_solve)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except ConvergenceError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


def main() -> None:
    sys.exit(run())
