"""Choose which buses shed load in each island and which switches to open."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .distflow import FEAS_TOL
from .grid import Configuration, Grid, is_radial
from .islanding import Component, rooted_tree

__all__ = [
    "FRONTIER_CAP",
    "ShedSet",
    "FlowRelief",
    "NoFeasibleShed",
    "RadialityError",
    "terminal_nodes",
    "select_shed_buses",
    "all_shed",
    "enforce_radiality",
    "mesh_flows",
]

# options kept per node before the frontier is thinned by shed buckets
FRONTIER_CAP = 4000


class NoFeasibleShed(ValueError):
    """No terminal-contiguous bus set covers the requirement."""


class RadialityError(ValueError):
    """A cycle contains no switchable branch."""


@dataclass(frozen=True)
class ShedSet:
    component_id: int
    buses: tuple[str, ...]
    p_shed_total: float
    q_shed_total: float
    impact_total: float
    switches_to_open: frozenset[int]
    exact: bool = True

    @classmethod
    def empty(cls, component_id: int) -> "ShedSet":
        return cls(component_id, (), 0.0, 0.0, 0.0, frozenset())


@dataclass(frozen=True)
class FlowRelief:
    """Shed inside the subtree below ``branch`` must bring its flow under ``limit``.

    ``h``/``g`` are the branch flows with no shed in that subtree.
    """

    branch: int
    h: float
    g: float
    limit: float

    def satisfied(self, p: float, q: float) -> bool:
        return math.hypot(self.h - p, self.g - q) <= self.limit + FEAS_TOL


def terminal_nodes(component: Component) -> frozenset[str]:
    """Leaf buses of the island's tree other than its root."""
    return component.terminals


def _terminal_distance(tree, component) -> dict[str, int]:
    adj = {b: list(tree.children[b]) for b in component.buses}
    for child, par in tree.parent.items():
        adj[child].append(par)
    terms = component.terminals or frozenset((component.root,))
    dist = {t: 0 for t in terms}
    queue = deque(sorted(terms))
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _peel_order(tree, component) -> list[str]:
    """Non-root buses in multi-source BFS order from the terminals toward the root."""
    pending = {b: len(tree.children[b]) for b in component.buses}
    queue = deque(sorted(b for b in component.buses if pending[b] == 0 and b != tree.root))
    order = []
    while queue:
        u = queue.popleft()
        order.append(u)
        par = tree.parent[u]
        pending[par] -= 1
        if pending[par] == 0 and par != tree.root:
            queue.append(par)
    return order


# frontier options: (p, q, impact, cuts) with cuts the shed subtree roots


def _prune(options, tol):
    options.sort(key=lambda o: (o[2], -o[0], -o[1], o[3]))
    kept = []
    for o in options:
        p, q, imp = o[0], o[1], o[2]
        dominated = False
        for k in kept:
            if k[0] >= p - tol and k[1] >= q - tol and (k[2] < imp - tol or k[0] <= p + tol):
                dominated = True
                break
        if not dominated:
            kept.append(o)
    return kept


def _thin(options, cap, p_sat):
    span = max(p_sat, max(o[0] for o in options), 1e-12)
    width = span / cap
    best = {}
    for o in options:
        key = min(int(o[0] / width), cap)
        cur = best.get(key)
        if cur is None or (o[2], -o[0], -o[1]) < (cur[2], -cur[0], -cur[1]):
            best[key] = o
    return list(best.values())


class _Frontier:
    def __init__(self, p_sat, q_sat, cap, tol):
        self.p_sat = p_sat
        self.q_sat = q_sat
        self.cap = cap
        self.tol = tol
        self.exact = True

    def normalize(self, options):
        # among options that already cover every requirement only the cheapest matters
        covers = [o[0] >= self.p_sat - self.tol and o[1] >= self.q_sat - self.tol for o in options]
        if sum(covers) > 1:
            best = min((o for o, c in zip(options, covers) if c), key=lambda o: (o[2], o[0], o[3]))
            options = [o for o, c in zip(options, covers) if not c] + [best]
        options = _prune(options, self.tol)
        if len(options) > self.cap:
            self.exact = False
            options = _prune(_thin(options, self.cap, self.p_sat), self.tol)
        return options

    def merge(self, left, right):
        out = [
            (a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3])
            for a in left for b in right
        ]
        return self.normalize(out)


def select_shed_buses(
    component: Component,
    deficit: float,
    grid: Grid,
    *,
    deficit_q: float = 0.0,
    relief: Iterable[FlowRelief] = (),
    frontier_cap: int = FRONTIER_CAP,
) -> ShedSet:
    """Minimum-impact set of whole subtrees whose shed covers the deficit.

    Candidate sets are unions of subtrees cut at switchable branches, i.e.
    runs that start at terminals and extend toward the root. The frontier of
    non-dominated (shed P, shed Q, impact) options is grown from the
    terminals inward; ``relief`` adds per-branch flow requirements that are
    enforced when the frontier passes that branch. Among covering sets the
    smallest impact wins, then the smallest total shed, then bus ids.
    """
    relief = {r.branch: r for r in relief}
    if deficit <= FEAS_TOL and deficit_q <= FEAS_TOL and not relief:
        return ShedSet.empty(component.id)
    if not component.has_source:
        raise ValueError("sourceless component: use all_shed")

    tree = rooted_tree(grid, component)
    scale = max(component.total_p_load, component.total_q_load, 1.0)
    tol = 1e-9 * scale
    p_sat = max([deficit] + [r.h for r in relief.values()])
    q_sat = max([deficit_q] + [r.g for r in relief.values()])
    fr = _Frontier(p_sat, q_sat, frontier_cap, tol)

    sub_p, sub_q, sub_i, sub_src = {}, {}, {}, {}
    frontier = {}
    empty = [(0.0, 0.0, 0.0, ())]
    for v in _peel_order(tree, component):
        bus = grid.bus(v)
        sp, sq, si = bus.p_load, bus.q_load, bus.weight * bus.p_load
        src = bus.is_source
        options = empty
        for c in tree.children[v]:
            sp += sub_p[c]
            sq += sub_q[c]
            si += sub_i[c]
            src = src or sub_src[c]
            options = fr.merge(options, frontier.pop(c))
        sub_p[v], sub_q[v], sub_i[v], sub_src[v] = sp, sq, si, src
        k = tree.parent_branch[v]
        if grid.branches[k].has_switch and not src and (sp > 0 or sq > 0):
            options = fr.normalize(options + [(sp, sq, si, (v,))])
        req = relief.get(k)
        if req is not None:
            options = [o for o in options if req.satisfied(o[0], o[1])]
            if not options:
                raise NoFeasibleShed(f"no shed set relieves branch {grid.branches[k].name}")
        frontier[v] = options

    options = empty
    for c in tree.children[tree.root]:
        options = fr.merge(options, frontier.pop(c))
    options = [o for o in options if o[0] >= deficit - FEAS_TOL and o[1] >= deficit_q - FEAS_TOL]
    if not options:
        raise NoFeasibleShed(
            f"component {component.id}: shedding every removable subtree cannot cover {deficit:.6g} kW"
        )
    best = min(options, key=lambda o: (o[2], o[0], sorted(o[3])))
    return _realize(grid, component, tree, best, fr.exact)


def _realize(grid, component, tree, option, exact) -> ShedSet:
    cuts = option[3]
    shed = []
    stack = list(cuts)
    while stack:
        u = stack.pop()
        shed.append(u)
        stack.extend(tree.children[u])
    dist = _terminal_distance(tree, component)
    shed.sort(key=lambda b: (dist.get(b, 0), grid.bus_index(b)))
    buses = [grid.bus(b) for b in shed]
    return ShedSet(
        component.id,
        tuple(shed),
        math.fsum(b.p_load for b in buses),
        math.fsum(b.q_load for b in buses),
        math.fsum(b.weight * b.p_load for b in buses),
        frozenset(tree.parent_branch[c] for c in cuts),
        exact,
    )


def all_shed(component: Component, grid: Grid) -> ShedSet:
    """Every bus of a sourceless island sheds; no switch inside it is touched."""
    buses = [grid.bus(b) for b in component.buses]
    return ShedSet(
        component.id,
        tuple(component.buses),
        math.fsum(b.p_load for b in buses),
        math.fsum(b.q_load for b in buses),
        math.fsum(b.weight * b.p_load for b in buses),
        frozenset(),
    )


def _slack_merged_parent(grid: Grid) -> list[int]:
    # all substations hang off one transmission system: a path between two is a loop
    parent = list(range(len(grid.buses)))
    slacks = [grid.bus_index(b) for b in grid.slack_ids]
    for s in slacks[1:]:
        parent[s] = slacks[0]
    return parent


def mesh_flows(grid: Grid, config: Configuration) -> dict[int, float]:
    """Active flows on energized branches from a lossless impedance-weighted solve.

    Slack buses are treated as one node. Within each connected group loads
    are served by its sources in proportion to their upper bounds; groups
    without a source carry no flow.
    """
    energized = config.energized(grid)
    n = len(grid.buses)
    node = _slack_merged_parent(grid)
    parent = list(node)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    ends = {k: (node[grid.bus_index(grid.branches[k].from_bus)], node[grid.bus_index(grid.branches[k].to_bus)])
            for k in energized}
    for a, b in ends.values():
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    groups: dict[int, list[int]] = {}
    for i in range(n):
        if node[i] == i:
            groups.setdefault(find(i), []).append(i)
    group_edges: dict[int, list[int]] = {}
    for k, (a, _) in ends.items():
        group_edges.setdefault(find(a), []).append(k)

    flows = {k: 0.0 for k in energized}
    for rep, members in groups.items():
        edges = group_edges.get(rep, [])
        if len(edges) < len(members):  # tree: no loop to break here
            continue
        local = {g: i for i, g in enumerate(members)}
        inj = np.zeros(len(members))
        caps: dict[int, float] = {}
        for i in range(n):
            if find(node[i]) != rep:
                continue
            bus = grid.buses[i]
            inj[local[node[i]]] -= bus.p_load
            lim = grid.source_limits(bus)
            if lim is not None:
                caps[node[i]] = caps.get(node[i], 0.0) + lim.p_max
        total_cap = sum(caps.values())
        if total_cap <= 0:
            continue
        demand = -inj.sum()
        for g, c in caps.items():
            inj[local[g]] += demand * c / total_cap
        lap = np.zeros((len(members), len(members)))
        ys = {}
        for k in edges:
            a, b = ends[k]
            br = grid.branches[k]
            y = 1.0 / (math.hypot(br.r, br.x) + 1e-6)
            ys[k] = y
            i, j = local[a], local[b]
            lap[i, i] += y
            lap[j, j] += y
            lap[i, j] -= y
            lap[j, i] -= y
        theta = np.zeros(len(members))
        theta[1:] = np.linalg.solve(lap[1:, 1:], inj[1:])
        for k in edges:
            a, b = ends[k]
            flows[k] = float(ys[k] * (theta[local[a]] - theta[local[b]]))
    return flows


def _joins_slacks(grid: Grid, config: Configuration) -> bool:
    slacks = grid.slack_ids
    if len(slacks) < 2:
        return False
    parent = list(range(len(grid.buses)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for k in config.energized(grid):
        br = grid.branches[k]
        ra, rb = find(grid.bus_index(br.from_bus)), find(grid.bus_index(br.to_bus))
        if ra != rb:
            parent[ra] = rb
    roots = [find(grid.bus_index(b)) for b in slacks]
    return len(set(roots)) < len(roots)


def enforce_radiality(grid: Grid, config: Configuration) -> frozenset[int]:
    """Minimal set of switchable branches to open so that the energized grid is a forest
    with at most one slack bus per tree.

    Branches are kept in order: unswitchable first, then closed ties, then the
    rest by decreasing |flow| under the all-closed solve (ties broken by
    name); a branch that would close a loop is opened. A path joining two
    slack buses counts as a loop.
    """
    if is_radial(grid, config) and not _joins_slacks(grid, config):
        return frozenset()
    flows = mesh_flows(grid, config)

    def rank(k):
        br = grid.branches[k]
        tier = 0 if not br.has_switch else (1 if br.is_tie else 2)
        return tier, -abs(flows[k]), br.name

    parent = _slack_merged_parent(grid)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    opened = set()
    for k in sorted(config.energized(grid), key=rank):
        br = grid.branches[k]
        ra, rb = find(grid.bus_index(br.from_bus)), find(grid.bus_index(br.to_bus))
        if ra == rb:
            if not br.has_switch:
                raise RadialityError(f"loop through {br.name} has no switchable branch")
            opened.add(k)
        else:
            parent[ra] = rb
    return frozenset(opened)
