"""Scenario engine: fault -> islands -> search -> shed selection -> switching plan."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .distflow import (
    FLOW_LIMIT,
    FlowSolution,
    InsufficientCapacity,
    Violation,
    check_constraints,
    component_min_shed,
    tree_power_flow,
)
from .grid import Configuration, FaultSet, Grid, GridError, apply_fault, is_radial, load_grid, parse_faults
from .islanding import build_auxiliary_graph, connected_components
from .search import DEFAULT_MAX_TIES, enumerate_configs, estimate_min_shed
from .shed import (
    FlowRelief,
    NoFeasibleShed,
    RadialityError,
    ShedSet,
    all_shed,
    enforce_radiality,
    select_shed_buses,
)

__all__ = [
    "InfeasibleScenario",
    "ScenarioError",
    "Realization",
    "RestorationPlan",
    "Scenario",
    "SuiteReport",
    "realize",
    "restore",
    "run_scenario",
    "emit_report",
    "load_scenario",
    "parse_scenario",
    "run_suite",
    "replay",
]

logger = logging.getLogger(__name__)

MAX_RELIEF_ROUNDS = 25


class InfeasibleScenario(RuntimeError):
    def __init__(self, message: str, violation: Violation | None = None):
        super().__init__(message)
        self.violation = violation


class ScenarioError(ValueError):
    """Malformed scenario file."""


@dataclass
class Realization:
    """A closure set turned into a concrete switch state with shed and flows."""

    closed: frozenset[int]
    config: Configuration
    shed_sets: list[ShedSet]
    solutions: list[FlowSolution]
    violations: list[Violation]
    relieved: bool = False

    @property
    def shed_p(self) -> float:
        return math.fsum(s.p_shed_total for s in self.shed_sets)

    @property
    def feasible(self) -> bool:
        return not self.violations


def _subtree(solution: FlowSolution, child: str) -> set[str]:
    kids: dict[str, list[str]] = {}
    for par, ch in solution.orientation.values():
        kids.setdefault(par, []).append(ch)
    out, stack = set(), [child]
    while stack:
        u = stack.pop()
        out.add(u)
        stack.extend(kids.get(u, ()))
    return out


def realize(grid: Grid, base: Configuration, closed: Iterable[int], relieve: bool = False) -> Realization:
    """Close ``closed`` on top of ``base``, break loops, pick shed per island and check flows.

    Without ``relieve`` each island only sheds its capacity deficit. With
    ``relieve`` flow-limit violations become subtree shed requirements and the
    selection is repeated until the island is clean or no set can satisfy them.
    """
    closed = frozenset(closed)
    config = base.with_switching(close=closed)
    try:
        loops = enforce_radiality(grid, config)
    except RadialityError as exc:
        return Realization(closed, config, [], [], [Violation("radiality", str(exc), math.inf)])
    ties_opened = {k for k in loops if grid.branches[k].is_tie}
    config = Configuration(config.closed_ties - ties_opened,
                           config.opened_sections | (loops - ties_opened), config.faults)

    shed_sets: list[ShedSet] = []
    solutions: list[FlowSolution] = []
    violations: list[Violation] = []
    relieved = False
    for comp in connected_components(grid, config):
        if not comp.has_source:
            if comp.total_p_load > 0 or comp.total_q_load > 0:
                shed_sets.append(all_shed(comp, grid))
            continue
        dp, dq = component_min_shed(comp)
        relief: dict[int, FlowRelief] = {}
        ss = sol = None
        viol: list[Violation] = []
        for _ in range(MAX_RELIEF_ROUNDS):
            try:
                ss = select_shed_buses(comp, dp, grid, deficit_q=dq, relief=relief.values())
                sol = tree_power_flow(grid, comp, {b: grid.bus(b).p_load for b in ss.buses})
            except (NoFeasibleShed, InsufficientCapacity) as exc:
                viol = [Violation("shed", comp.root, math.inf)]
                logger.debug("component %d: %s", comp.id, exc)
                ss = sol = None
                break
            viol = check_constraints(grid, sol)
            flow_viol = [v for v in viol if v.kind == FLOW_LIMIT]
            if not relieve or not flow_viol:
                break
            relieved = True
            shed_here = set(ss.buses)
            for v in flow_viol:
                k = grid.branch_by_name(v.entity)
                h, g = sol.flows[k]
                below = _subtree(sol, sol.orientation[k][1]) & shed_here
                sp = math.fsum(sol.shed[b][0] for b in below)
                sq = math.fsum(sol.shed[b][1] for b in below)
                relief[k] = FlowRelief(k, h + sp, g + sq, grid.branches[k].s_max)
        violations.extend(viol)
        if ss is not None:
            if ss.buses:
                shed_sets.append(ss)
                # a cut on a tie closed above just leaves that tie open
                cut_ties = {k for k in ss.switches_to_open if grid.branches[k].is_tie}
                config = Configuration(config.closed_ties - cut_ties,
                                       config.opened_sections | (ss.switches_to_open - cut_ties),
                                       config.faults)
            solutions.append(sol)
    return Realization(closed, config, shed_sets, solutions, violations, relieved)


@dataclass
class RestorationPlan:
    scenario: str
    faults: list[str]
    close_sequence: list[str]
    open_sequence: list[str]
    shed_buses: list[ShedSet]
    shed_before: float
    shed_after: float
    reduction_pct: float | None
    elapsed_seconds: float
    search_stats: dict
    min_shed_estimate: float = 0.0
    rejected: list[tuple[list[str], list[Violation]]] = field(default_factory=list)
    closed_ties: frozenset[int] = frozenset()
    opened_sections: frozenset[int] = frozenset()
    fault_set: FaultSet = field(default_factory=FaultSet)
    relieved: bool = False

    @property
    def no_outage(self) -> bool:
        return self.shed_before <= 0

    @property
    def configuration(self) -> Configuration:
        return Configuration(self.closed_ties, self.opened_sections, self.fault_set)

    def shed_bus_ids(self) -> list[str]:
        return [b for s in self.shed_buses for b in s.buses]

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "scenario": self.scenario,
            "faults": list(self.faults),
            "close": list(self.close_sequence),
            "open": list(self.open_sequence),
            "shed_before_kw": round(self.shed_before, 6),
            "shed_after_kw": round(self.shed_after, 6),
            "reduction_pct": None if self.reduction_pct is None else round(self.reduction_pct, 2),
            "min_shed_estimate_kw": round(self.min_shed_estimate, 6),
            "islands": [
                {
                    "component": s.component_id,
                    "buses": list(s.buses),
                    "p_shed_kw": round(s.p_shed_total, 6),
                    "impact": round(s.impact_total, 6),
                    "exact": s.exact,
                }
                for s in self.shed_buses
            ],
            "rejected": [
                {"close": c, "violations": [[v.kind, v.entity, round(v.magnitude, 6)] for v in vs]}
                for c, vs in self.rejected
            ],
            "search": dict(self.search_stats),
            "flow_relief": self.relieved,
        }
        if timing:
            d["elapsed_seconds"] = round(self.elapsed_seconds, 3)
        return d


def _baseline_shed(grid: Grid, config: Configuration) -> float:
    total = 0.0
    for comp in connected_components(grid, config):
        if not comp.has_source:
            total += comp.total_p_load
        else:
            total += component_min_shed(comp)[0]
    return total


def _names(grid: Grid, idx: Iterable[int]) -> list[str]:
    return sorted(grid.branches[k].name for k in idx)


def _tightest(candidates: Sequence[Realization]) -> Violation | None:
    best = None
    for r in candidates:
        if not r.violations:
            continue
        worst = max(r.violations, key=lambda v: v.magnitude)
        if best is None or worst.magnitude < best.magnitude:
            best = worst
    return best


def restore(
    grid: Grid,
    faults: FaultSet | str | Sequence[str],
    *,
    name: str = "",
    workers: int = 1,
    max_ties: int = DEFAULT_MAX_TIES,
    prune: bool = True,
    backend: str | None = None,
) -> RestorationPlan:
    """Run the full restoration pipeline for one fault set."""
    if not isinstance(faults, FaultSet):
        faults = parse_faults(grid, faults)
    t0 = time.perf_counter()
    base = apply_fault(grid, faults)
    shed_before = _baseline_shed(grid, base)
    aux = build_auxiliary_graph(grid, base)
    ref = estimate_min_shed(aux)

    cache: dict[tuple[frozenset[int], bool], Realization] = {}

    def get(closed, relieve):
        key = (closed, relieve)
        if key not in cache:
            cache[key] = realize(grid, base, closed, relieve)
        return cache[key]

    result = enumerate_configs(
        aux, ref.p, prune=prune, max_ties=max_ties, workers=workers, backend=backend,
        feasibility=lambda closed: get(closed, False).violations,
    )
    rejected = [(_names(grid, r.closed), list(r.violations)) for r in result.rejected]

    if result.optimal_configs:
        chosen = get(min(result.optimal_configs, key=sorted), False)
    else:
        chosen = None
        tried = []
        for level in sorted(result.levels):
            feasible = []
            for closed in result.levels[level]:
                real = get(closed, True)
                tried.append(real)
                if real.feasible:
                    feasible.append(real)
            if feasible:
                chosen = min(feasible, key=lambda r: (round(r.shed_p, 6), sorted(r.closed)))
                break
        if chosen is None:
            worst = _tightest(tried) or _tightest([get(c, False) for c in result.levels.get(0, [])])
            detail = f"{worst.kind} at {worst.entity} ({worst.magnitude:.6g})" if worst else "no candidate"
            raise InfeasibleScenario(f"no configuration satisfies the constraints: {detail}", worst)
    elapsed = time.perf_counter() - t0

    final = chosen.config
    shed_after = chosen.shed_p
    reduction = None
    if shed_before > 0:
        reduction = 100.0 * (shed_before - shed_after) / shed_before
    stats = {
        "explored": result.explored,
        "pruned": result.pruned,
        "memo_hits": result.memo_hits,
        "candidate_ties": result.n_candidates,
        "backend": result.backend,
        "search_seconds": round(result.elapsed, 6),
    }
    return RestorationPlan(
        scenario=name,
        faults=faults.names(grid),
        close_sequence=_names(grid, final.closed_ties - base.closed_ties),
        open_sequence=_names(grid, final.opened_sections - base.opened_sections),
        shed_buses=chosen.shed_sets,
        shed_before=shed_before,
        shed_after=shed_after,
        reduction_pct=reduction,
        elapsed_seconds=elapsed,
        search_stats=stats,
        min_shed_estimate=ref.p,
        rejected=rejected,
        closed_ties=final.closed_ties,
        opened_sections=final.opened_sections,
        fault_set=faults,
        relieved=chosen.relieved,
    )


def replay(grid: Grid, plan: RestorationPlan) -> tuple[float, bool, list[Violation]]:
    """Apply a plan to the post-fault baseline; return (shed, radial, violations)."""
    config = apply_fault(grid, plan.fault_set).with_switching(
        close=[grid.branch_by_name(n) for n in plan.close_sequence],
        open=[grid.branch_by_name(n) for n in plan.open_sequence],
    )
    radial = is_radial(grid, config)
    shed = 0.0
    violations: list[Violation] = []
    for comp in connected_components(grid, config):
        if not comp.has_source:
            shed += comp.total_p_load
            continue
        try:
            sol = tree_power_flow(grid, comp)
        except InsufficientCapacity:
            violations.append(Violation("shed", comp.root, math.inf))
            continue
        violations.extend(check_constraints(grid, sol))
    return shed, radial, violations


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    name: str
    grid_file: str
    faults: str
    expect_close: list[str] | None = None
    expect_open: list[str] | None = None
    expect_shed_max: float | None = None
    expect_shed_min: float | None = None
    expect_shed_buses: list[str] | None = None
    expect_reduction: float | None = None
    expect_reduction_tol: float = 2.0
    expect_min_reduction: float | None = None
    expect_max_close: int | None = None
    expect_max_open: int | None = None
    path: str | None = None

    def resolve_grid(self) -> str:
        if self.path and not os.path.isabs(self.grid_file):
            return os.path.join(os.path.dirname(self.path), self.grid_file)
        return self.grid_file


_LIST_KEYS = {"expect_close", "expect_open", "expect_shed_buses"}
_FLOAT_KEYS = {"expect_shed_max", "expect_shed_min", "expect_reduction", "expect_reduction_tol",
               "expect_min_reduction"}
_INT_KEYS = {"expect_max_close", "expect_max_open"}


def parse_scenario(text: str, path: str | None = None) -> Scenario:
    fields: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ScenarioError(f"line {lineno}: expected key=value")
        if key in _LIST_KEYS:
            fields[key] = [v.strip() for v in value.split(",") if v.strip()]
        elif key in _FLOAT_KEYS:
            try:
                fields[key] = float(value)
            except ValueError:
                raise ScenarioError(f"line {lineno}: {key} needs a number") from None
        elif key in _INT_KEYS:
            try:
                fields[key] = int(value)
            except ValueError:
                raise ScenarioError(f"line {lineno}: {key} needs an integer") from None
        elif key in ("name", "grid", "faults"):
            fields["grid_file" if key == "grid" else key] = value
        else:
            raise ScenarioError(f"line {lineno}: unknown key {key!r}")
    for req in ("name", "grid_file", "faults"):
        if req not in fields:
            raise ScenarioError(f"missing {'grid' if req == 'grid_file' else req}=")
    return Scenario(path=path, **fields)


def load_scenario(path) -> Scenario:
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), path)


def run_scenario(scenario: Scenario, grid: Grid | None = None, **kwargs) -> RestorationPlan:
    if grid is None:
        grid = load_grid(scenario.resolve_grid())
    return restore(grid, scenario.faults, name=scenario.name, **kwargs)


def check_expectations(grid: Grid, scenario: Scenario, plan: RestorationPlan) -> list[str]:
    """Human-readable expectation mismatches (empty when the plan matches)."""
    problems = []

    def as_set(names):
        return {grid.branch_by_name(n) for n in names}

    for label, expected, got in (
        ("close", scenario.expect_close, plan.close_sequence),
        ("open", scenario.expect_open, plan.open_sequence),
    ):
        if expected is not None and as_set(expected) != as_set(got):
            problems.append(f"{label}: expected {sorted(expected)}, got {sorted(got)}")
    if scenario.expect_shed_max is not None and plan.shed_after > scenario.expect_shed_max + 1e-6:
        problems.append(f"shed {plan.shed_after:.3f} kW above max {scenario.expect_shed_max:.3f}")
    if scenario.expect_shed_min is not None and plan.shed_after < scenario.expect_shed_min - 1e-6:
        problems.append(f"shed {plan.shed_after:.3f} kW below min {scenario.expect_shed_min:.3f}")
    if scenario.expect_shed_buses is not None and set(scenario.expect_shed_buses) != set(plan.shed_bus_ids()):
        problems.append(f"shed buses: expected {sorted(scenario.expect_shed_buses)}, got {sorted(plan.shed_bus_ids())}")
    if scenario.expect_reduction is not None:
        got = plan.reduction_pct
        if got is None or abs(got - scenario.expect_reduction) > scenario.expect_reduction_tol:
            problems.append(f"reduction {got} outside {scenario.expect_reduction}±{scenario.expect_reduction_tol}")
    if scenario.expect_min_reduction is not None:
        got = plan.reduction_pct
        if got is None or got < scenario.expect_min_reduction:
            problems.append(f"reduction {got} below {scenario.expect_min_reduction}")
    for label, limit, got in (("close", scenario.expect_max_close, plan.close_sequence),
                              ("open", scenario.expect_max_open, plan.open_sequence)):
        if limit is not None and len(got) > limit:
            problems.append(f"{len(got)} {label} operations, at most {limit} expected")
    return problems


@dataclass
class SuiteReport:
    plans: list[RestorationPlan]
    failures: dict[str, list[str]]
    errors: dict[str, str]

    @property
    def ok(self) -> bool:
        return not self.failures and not self.errors

    @property
    def exit_code(self) -> int:
        if self.errors:
            return 2
        if self.failures:
            return 3
        return 0


def run_suite(scenario_dir, **kwargs) -> SuiteReport:
    """Run every ``*.scn`` file in ``scenario_dir`` (sorted by file name)."""
    plans, failures, errors = [], {}, {}
    grids: dict[str, Grid] = {}
    for path in sorted(Path(scenario_dir).glob("*.scn")):
        try:
            sc = load_scenario(path)
            gpath = sc.resolve_grid()
            if gpath not in grids:
                grids[gpath] = load_grid(gpath)
            grid = grids[gpath]
        except (OSError, GridError, ScenarioError) as exc:
            errors[path.stem] = str(exc)
            continue
        try:
            plan = run_scenario(sc, grid, **kwargs)
        except InfeasibleScenario as exc:
            failures[sc.name] = [f"infeasible: {exc}"]
            continue
        except (GridError, ValueError) as exc:
            errors[sc.name] = str(exc)
            continue
        plans.append(plan)
        problems = check_expectations(grid, sc, plan)
        if problems:
            failures[sc.name] = problems
    return SuiteReport(plans, failures, errors)


# ---------------------------------------------------------------------------
# reports


def _sequence(plan: RestorationPlan) -> str:
    parts = []
    if plan.close_sequence:
        parts.append("Close: " + ", ".join(plan.close_sequence))
    if plan.open_sequence:
        parts.append("Open: " + ", ".join(plan.open_sequence))
    return "; ".join(parts) if parts else "--"


def _pct(v: float | None) -> str:
    return "no outage" if v is None else f"{v:.2f}"


def emit_report(plans: RestorationPlan | Sequence[RestorationPlan], format: str = "table") -> str:
    """Render plans as an aligned table, CSV rows or JSON."""
    if isinstance(plans, RestorationPlan):
        plans = [plans]
    if format == "table":
        head = ("Scenario", "Fault", "Time (s)", "Switching sequence", "Shed before (kW)",
                "Shed after (kW)", "Reduction (%)")
        rows = [
            (p.scenario, ", ".join(p.faults) or "--", f"{p.elapsed_seconds:.3f}", _sequence(p),
             f"{p.shed_before:.1f}", f"{p.shed_after:.1f}", _pct(p.reduction_pct))
            for p in plans
        ]
        widths = [max(len(str(r[i])) for r in [head, *rows]) for i in range(len(head))]
        lines = [" | ".join(h.ljust(w) for h, w in zip(head, widths))]
        lines.append("-+-".join("-" * w for w in widths))
        lines += [" | ".join(str(c).ljust(w) for c, w in zip(r, widths)) for r in rows]
        return "\n".join(lines) + "\n"
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "faults", "n_faults", "close", "open", "shed_before_kw",
                    "shed_after_kw", "reduction_pct"])
        for p in plans:
            w.writerow([p.scenario, " ".join(p.faults), len(p.faults), " ".join(p.close_sequence),
                        " ".join(p.open_sequence), f"{p.shed_before:.3f}", f"{p.shed_after:.3f}",
                        "" if p.reduction_pct is None else f"{p.reduction_pct:.2f}"])
        return buf.getvalue()
    if format == "json":
        data = [p.to_dict() for p in plans]
        return json.dumps(data[0] if len(data) == 1 else data, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown report format {format!r}")
