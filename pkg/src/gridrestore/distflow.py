"""Linearized DistFlow evaluation on a single radial island."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .grid import Generator, Grid
from .islanding import Component, rooted_tree

__all__ = [
    "FEAS_TOL",
    "FlowSolution",
    "Violation",
    "InsufficientCapacity",
    "block_shed",
    "dispatch",
    "tree_power_flow",
    "check_constraints",
    "component_min_shed",
]

FEAS_TOL = 1e-6

FLOW_LIMIT = "flow-limit"
VOLTAGE_BOUND = "voltage-bound"
DG_BOUND = "dg-bound"


class InsufficientCapacity(ValueError):
    """Post-shed demand is larger than what the island's sources can supply."""


@dataclass(frozen=True)
class Violation:
    kind: str
    entity: str
    magnitude: float


@dataclass(frozen=True)
class FlowSolution:
    """Flows are signed parent->child; ``orientation[k]`` gives (parent, child)."""

    root: str
    flows: dict[int, tuple[float, float]]
    orientation: dict[int, tuple[str, str]]
    voltages: dict[str, float]
    dispatch: dict[str, tuple[float, float]]
    shed: dict[str, tuple[float, float]]

    def residuals(self, grid: Grid) -> dict[str, tuple[float, float]]:
        """Per-bus power balance residuals (injection - demand - outflow + inflow)."""
        res = {}
        for b in self.voltages:
            bus = grid.bus(b)
            gp, gq = self.dispatch.get(b, (0.0, 0.0))
            sp, sq = self.shed.get(b, (0.0, 0.0))
            res[b] = [gp - (bus.p_load - sp), gq - (bus.q_load - sq)]
        for k, (h, g) in self.flows.items():
            par, ch = self.orientation[k]
            res[par][0] -= h
            res[par][1] -= g
            res[ch][0] += h
            res[ch][1] += g
        return {b: (p, q) for b, (p, q) in res.items()}


def block_shed(grid: Grid, amounts: Mapping[str, float]) -> dict[str, tuple[float, float]]:
    """Expand active shed amounts to (P, Q) with reactive shed tied to the bus ratio.

    A bus listed with zero active load sheds its whole reactive load.
    """
    out = {}
    for b, p in amounts.items():
        bus = grid.bus(b)
        if bus.p_load > 0:
            q = bus.q_load * (p / bus.p_load)
        else:
            q = bus.q_load
        out[b] = (p, q)
    return out


def _share(demand: float, boxes: list[tuple[float, float]]) -> list[float]:
    """Split ``demand`` proportionally to the upper bounds, respecting lower bounds."""
    n = len(boxes)
    out = [0.0] * n
    free = list(range(n))
    remaining = demand
    if demand < math.fsum(lo for lo, _ in boxes):
        # cannot honour every lower bound; keep the balance and let the bound check report it
        free = []
        total = math.fsum(hi for _, hi in boxes)
        out = [demand * hi / total if total > 0 else demand / n for _, hi in boxes]
    while free:
        total = math.fsum(boxes[i][1] for i in free)
        if total <= 0:
            for i in free:
                out[i] = boxes[i][0]
            break
        frac = remaining / total
        clipped = [i for i in free if frac * boxes[i][1] < boxes[i][0]]
        if not clipped:
            for i in free:
                out[i] = frac * boxes[i][1]
            break
        for i in clipped:
            out[i] = boxes[i][0]
            remaining -= boxes[i][0]
            free.remove(i)
    return out


def dispatch(grid: Grid, component: Component, demand_p: float, demand_q: float,
             policy: str = "proportional") -> dict[str, tuple[float, float]]:
    """Proportional dispatch: each source covers demand in proportion to its upper bound."""
    if policy != "proportional":
        raise ValueError(f"unknown dispatch policy {policy!r}")
    sources: list[tuple[str, Generator]] = []
    for b in component.buses:
        lim = grid.source_limits(grid.bus(b))
        if lim is not None:
            sources.append((b, lim))
    if not sources:
        if demand_p > FEAS_TOL or demand_q > FEAS_TOL:
            raise InsufficientCapacity(f"component {component.id} has demand but no source")
        return {}
    cap_p = math.fsum(g.p_max for _, g in sources)
    if demand_p > cap_p + FEAS_TOL:
        raise InsufficientCapacity(
            f"component {component.id}: demand {demand_p:.6g} kW exceeds capacity {cap_p:.6g} kW"
        )
    ps = _share(demand_p, [(g.p_min, g.p_max) for _, g in sources])
    qs = _share(demand_q, [(g.q_min, g.q_max) for _, g in sources])
    return {b: (p, q) for (b, _), p, q in zip(sources, ps, qs)}


def tree_power_flow(grid: Grid, component: Component, shed: Mapping[str, float] | None = None,
                    dispatch_policy: str = "proportional") -> FlowSolution:
    """Branch flows, bus voltages and dispatch on one radial component.

    ``shed`` maps bus id to active shed (kW); reactive shed follows the bus's
    Q/P ratio. Flows accumulate bottom-up, voltages drop top-down from the root
    which is held at ``u_nominal``.
    """
    tree = rooted_tree(grid, component)
    shed_pq = block_shed(grid, shed or {})
    demand = {}
    for b in component.buses:
        bus = grid.bus(b)
        sp, sq = shed_pq.get(b, (0.0, 0.0))
        if sp < -FEAS_TOL or sp > bus.p_load + FEAS_TOL:
            raise ValueError(f"shed at bus {b} outside [0, P_L]")
        demand[b] = (bus.p_load - sp, bus.q_load - sq)
    dp = math.fsum(d[0] for d in demand.values())
    dq = math.fsum(d[1] for d in demand.values())
    disp = dispatch(grid, component, dp, dq, dispatch_policy)

    net = {b: [demand[b][0] - disp.get(b, (0, 0))[0], demand[b][1] - disp.get(b, (0, 0))[1]]
           for b in component.buses}
    flows: dict[int, tuple[float, float]] = {}
    orientation: dict[int, tuple[str, str]] = {}
    for b in reversed(tree.order[1:]):
        h, g = net[b]
        k = tree.parent_branch[b]
        par = tree.parent[b]
        flows[k] = (h, g)
        orientation[k] = (par, b)
        net[par][0] += h
        net[par][1] += g

    u0 = grid.u_nominal
    voltages = {tree.root: u0}
    for b in tree.order[1:]:
        k = tree.parent_branch[b]
        br = grid.branches[k]
        h, g = flows[k]
        drop = (br.r / grid.z_base * h / grid.s_base + br.x / grid.z_base * g / grid.s_base) / u0
        voltages[b] = voltages[tree.parent[b]] - drop

    return FlowSolution(tree.root, flows, orientation, voltages, disp,
                        {b: v for b, v in shed_pq.items() if b in net})


def check_constraints(grid: Grid, solution: FlowSolution, tol: float = FEAS_TOL) -> list[Violation]:
    out = []
    for k in sorted(solution.flows):
        h, g = solution.flows[k]
        br = grid.branches[k]
        excess = math.hypot(h, g) - br.s_max
        if excess > tol:
            out.append(Violation(FLOW_LIMIT, br.name, excess))
    for b, u in solution.voltages.items():
        bus = grid.bus(b)
        if u < bus.u_min - tol:
            out.append(Violation(VOLTAGE_BOUND, b, bus.u_min - u))
        elif u > bus.u_max + tol:
            out.append(Violation(VOLTAGE_BOUND, b, u - bus.u_max))
    for b, (p, q) in solution.dispatch.items():
        lim = grid.source_limits(grid.bus(b))
        worst = max(lim.p_min - p, p - lim.p_max, lim.q_min - q, q - lim.q_max)
        if worst > tol:
            out.append(Violation(DG_BOUND, b, worst))
    return out


def component_min_shed(component: Component) -> tuple[float, float]:
    """Capacity-balance shed of one island: ``max(0, load - capacity)`` for P and Q."""
    return (
        max(0.0, component.total_p_load - component.total_p_cap),
        max(0.0, component.total_q_load - component.total_q_cap),
    )
