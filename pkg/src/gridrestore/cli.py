"""Command line front end.

Exit codes: 0 success, 1 infeasible scenario, 2 input error, 3 expectation mismatch.
"""
from __future__ import annotations

import argparse
import logging
import random
import sys

from . import oracle
from .grid import Configuration, GridError, load_grid, serialize_grid
from .gridgen import GenSpec, count_radial_topologies, generate, load_tie_spec
from .islanding import connected_components
from .runner import (
    InfeasibleScenario,
    ScenarioError,
    check_expectations,
    emit_report,
    load_scenario,
    replay,
    restore,
    run_scenario,
    run_suite,
)
from .search import TooManyTies, enumerate_configs, estimate_min_shed
from .shed import select_shed_buses

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_INPUT = 2
EXIT_MISMATCH = 3

_FORMATS = {"table": "table", "csv": "csv", "delimited": "csv", "json": "json", "structured": "json"}


def _cmd_restore(args) -> int:
    grid = load_grid(args.grid)
    plan = restore(grid, args.faults, name=args.name, workers=args.workers, max_ties=args.max_ties)
    sys.stdout.write(emit_report(plan, _FORMATS[args.format]))
    return EXIT_OK


def _cmd_suite(args) -> int:
    report = run_suite(args.dir, workers=args.workers)
    if report.plans:
        sys.stdout.write(emit_report(report.plans, _FORMATS[args.format]))
    for name, problems in sorted(report.failures.items()):
        for p in problems:
            print(f"MISMATCH {name}: {p}", file=sys.stderr)
    for name, msg in sorted(report.errors.items()):
        print(f"ERROR {name}: {msg}", file=sys.stderr)
    n = len(report.plans) + len(report.errors) + len([f for f in report.failures if f not in
                                                         {p.scenario for p in report.plans}])
    print(f"{n} scenario(s), {len(report.failures)} mismatch(es), {len(report.errors)} error(s)",
          file=sys.stderr)
    return report.exit_code


def _verify_search(args) -> int:
    rng = random.Random(args.seed)
    bad = 0
    for i in range(args.count):
        aux = oracle.random_aux(rng, max_nodes=10, max_ties=args.max_ties)
        ref = estimate_min_shed(aux)
        got = enumerate_configs(aux, ref.p)
        want = oracle.brute_force_min_shed(aux)
        same = (abs(got.min_shed_p - want.min_shed) <= 1e-9
                and sorted(map(sorted, got.optimal_configs)) == sorted(map(sorted, want.all_optimal_subsets)))
        if not same:
            bad += 1
            print(f"instance {i}: search {got.min_shed_p} {sorted(map(sorted, got.optimal_configs))} "
                  f"oracle {want.min_shed} {sorted(map(sorted, want.all_optimal_subsets))}")
    print(f"search: {args.count - bad}/{args.count} instances agree")
    return EXIT_OK if bad == 0 else EXIT_MISMATCH


def _verify_shed(args) -> int:
    rng = random.Random(args.seed)
    bad = 0
    for i in range(args.count):
        grid = oracle.random_tree_grid(rng, rng.randint(2, args.max_buses))
        comp = connected_components(grid, Configuration())[0]
        deficit = float(rng.randint(0, int(comp.total_p_load)))
        got = select_shed_buses(comp, deficit, grid)
        want = oracle.brute_force_shed_set(comp, deficit, grid)
        if got.impact_total != want.impact_total:
            bad += 1
            print(f"instance {i}: selector {got.impact_total} {got.buses} oracle {want.impact_total} {want.buses}")
    print(f"shed: {args.count - bad}/{args.count} instances agree")
    return EXIT_OK if bad == 0 else EXIT_MISMATCH


def _verify_scenario(args) -> int:
    sc = load_scenario(args.scenario)
    grid = load_grid(sc.resolve_grid())
    plan = run_scenario(sc, grid)
    shed, radial, violations = replay(grid, plan)
    problems = check_expectations(grid, sc, plan)
    if abs(shed - plan.shed_after) > 1e-6:
        problems.append(f"replayed shed {shed:.6f} differs from plan {plan.shed_after:.6f}")
    if not radial:
        problems.append("replayed configuration is not radial")
    problems += [f"violation {v.kind} at {v.entity}" for v in violations]
    for p in problems:
        print(f"{sc.name}: {p}")
    print(f"{sc.name}: {'ok' if not problems else 'FAILED'}")
    return EXIT_OK if not problems else EXIT_MISMATCH


def _cmd_gen(args) -> int:
    base = load_grid(args.base)
    ties = load_tie_spec(args.ties) if args.ties else []
    spec = GenSpec(base, args.replicas, tuple(ties), args.dgs, args.seed, args.load_scale)
    grid = generate(spec)
    text = serialize_grid(grid)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.count:
        print(f"radial topologies: {count_radial_topologies(grid)}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridrestore", description="Distribution grid restoration planner.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("restore", help="plan restoration for one fault set")
    p.add_argument("--grid", required=True)
    p.add_argument("--faults", default="", help='comma separated branch names, e.g. "713-704,730-709"')
    p.add_argument("--format", choices=sorted(_FORMATS), default="table")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-ties", type=int, default=30)
    p.add_argument("--name", default="")
    p.set_defaults(func=_cmd_restore)

    p = sub.add_parser("suite", help="run every *.scn scenario in a directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--format", choices=sorted(_FORMATS), default="table")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_suite)

    p = sub.add_parser("verify", help="cross-check against brute-force oracles")
    vsub = p.add_subparsers(dest="what", required=True)
    v = vsub.add_parser("search")
    v.add_argument("--count", type=int, default=200)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--max-ties", type=int, default=12)
    v.set_defaults(func=_verify_search)
    v = vsub.add_parser("shed")
    v.add_argument("--count", type=int, default=200)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--max-buses", type=int, default=12)
    v.set_defaults(func=_verify_shed)
    v = vsub.add_parser("scenario")
    v.add_argument("scenario")
    v.set_defaults(func=_verify_scenario)

    p = sub.add_parser("gen", help="build a multi-feeder grid from a base feeder")
    p.add_argument("--base", required=True)
    p.add_argument("--replicas", type=int, default=4)
    p.add_argument("--ties")
    p.add_argument("--dgs", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--load-scale", type=float, default=1.0)
    p.add_argument("--out")
    p.add_argument("--count", action="store_true", help="also print the number of radial topologies")
    p.set_defaults(func=_cmd_gen)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleScenario as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OSError, GridError, ScenarioError, TooManyTies, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
