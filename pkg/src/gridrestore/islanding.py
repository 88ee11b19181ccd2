"""Connected components of a configured grid and the component-level tie graph."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .grid import Configuration, Grid

__all__ = [
    "Component",
    "RootedTree",
    "AuxEdge",
    "AuxGraph",
    "MergeResult",
    "connected_components",
    "rooted_tree",
    "build_auxiliary_graph",
    "merged_balance",
]


@dataclass(frozen=True)
class Component:
    id: int
    buses: tuple[str, ...]
    energized_branches: frozenset[int]
    total_p_load: float
    total_q_load: float
    total_p_cap: float
    total_q_cap: float
    has_source: bool
    root: str
    terminals: frozenset[str]

    @property
    def p_balance(self) -> float:
        return self.total_p_cap - self.total_p_load

    @property
    def q_balance(self) -> float:
        return self.total_q_cap - self.total_q_load

    def __contains__(self, bus_id: str) -> bool:
        return bus_id in self.buses


@dataclass(frozen=True)
class RootedTree:
    root: str
    order: tuple[str, ...]  # breadth-first from the root
    parent: dict[str, str]
    parent_branch: dict[str, int]
    children: dict[str, tuple[str, ...]]


def _pick_root(grid: Grid, bus_ids: Sequence[str]) -> str:
    buses = [grid.bus(b) for b in bus_ids]
    for b in buses:
        if b.is_slack:
            return b.id
    dgs = [b for b in buses if b.dg is not None]
    if dgs:
        best = max(b.dg.p_max for b in dgs)
        return next(b.id for b in dgs if b.dg.p_max == best)
    return buses[0].id


def _adjacency(grid: Grid, branches: Iterable[int]) -> dict[str, list[tuple[str, int]]]:
    adj: dict[str, list[tuple[str, int]]] = {}
    for k in sorted(branches):
        a, b = grid.branches[k].ends
        adj.setdefault(a, []).append((b, k))
        adj.setdefault(b, []).append((a, k))
    return adj


def rooted_tree(grid: Grid, component: Component) -> RootedTree:
    """Orient a radial component away from its root bus.

    Raises ValueError if the component's energized branches contain a cycle.
    """
    if len(component.energized_branches) != len(component.buses) - 1:
        raise ValueError(f"component {component.id} is not radial")
    adj = _adjacency(grid, component.energized_branches)
    parent: dict[str, str] = {}
    parent_branch: dict[str, int] = {}
    children: dict[str, list[str]] = {b: [] for b in component.buses}
    order = [component.root]
    seen = {component.root}
    queue = deque([component.root])
    while queue:
        u = queue.popleft()
        for v, k in adj.get(u, ()):
            if v in seen:
                continue
            seen.add(v)
            parent[v] = u
            parent_branch[v] = k
            children[u].append(v)
            order.append(v)
            queue.append(v)
    return RootedTree(
        component.root,
        tuple(order),
        parent,
        parent_branch,
        {b: tuple(c) for b, c in children.items()},
    )


def connected_components(grid: Grid, config: Configuration) -> list[Component]:
    """Split the energized grid into components, ordered by first bus in file order."""
    n = len(grid.buses)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    energized = config.energized(grid)
    for k in energized:
        a, b = (grid.bus_index(e) for e in grid.branches[k].ends)
        ra, rb = find(a), find(b)
        if ra != rb:
            # keep the smaller index as representative so ordering is stable
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    comp_branches: dict[int, set[int]] = {r: set() for r in groups}
    for k in energized:
        comp_branches[find(grid.bus_index(grid.branches[k].from_bus))].add(k)

    out = []
    for cid, rep in enumerate(sorted(groups)):
        members = groups[rep]
        ids = tuple(grid.buses[i].id for i in members)
        p_load = math.fsum(grid.buses[i].p_load for i in members)
        q_load = math.fsum(grid.buses[i].q_load for i in members)
        p_cap = q_cap = 0.0
        has_source = False
        for i in members:
            lim = grid.source_limits(grid.buses[i])
            if lim is not None:
                has_source = True
                p_cap += lim.p_max
                q_cap += lim.q_max
        root = _pick_root(grid, ids)
        degree = {b: 0 for b in ids}
        for k in comp_branches[rep]:
            for e in grid.branches[k].ends:
                degree[e] += 1
        if len(ids) == 1:
            terminals = frozenset(ids)
        else:
            terminals = frozenset(b for b in ids if degree[b] == 1 and b != root)
        out.append(
            Component(cid, ids, frozenset(comp_branches[rep]), p_load, q_load,
                      p_cap, q_cap, has_source, root, terminals)
        )
    return out


@dataclass(frozen=True)
class AuxEdge:
    tie_index: int
    node_a: int
    node_b: int

    @property
    def redundant(self) -> bool:
        return self.node_a == self.node_b


@dataclass(frozen=True)
class AuxGraph:
    """Components as nodes, open tie lines as edges.

    ``grid``, ``base`` and ``components`` are absent for synthetic instances
    built directly from balances.
    """

    balances_p: tuple[float, ...]
    balances_q: tuple[float, ...]
    edges: tuple[AuxEdge, ...]
    components: tuple[Component, ...] | None = None
    grid: Grid | None = None
    base: Configuration | None = None

    @classmethod
    def from_balances(cls, balances_p, edges, balances_q=None) -> "AuxGraph":
        """Synthetic instance; ``edges`` are ``(a, b)`` pairs, tie index = position."""
        bp = tuple(float(v) for v in balances_p)
        bq = tuple(float(v) for v in balances_q) if balances_q is not None else (0.0,) * len(bp)
        return cls(bp, bq, tuple(AuxEdge(i, a, b) for i, (a, b) in enumerate(edges)))

    @property
    def n_nodes(self) -> int:
        return len(self.balances_p)

    @property
    def candidate_edges(self) -> tuple[AuxEdge, ...]:
        return tuple(e for e in self.edges if not e.redundant)

    def edge(self, tie_index: int) -> AuxEdge:
        for e in self.edges:
            if e.tie_index == tie_index:
                return e
        raise KeyError(tie_index)


def build_auxiliary_graph(grid: Grid, config: Configuration) -> AuxGraph:
    comps = connected_components(grid, config)
    comp_of = {b: c.id for c in comps for b in c.buses}
    edges = []
    for k in grid.tie_indices:
        if k in config.closed_ties:
            continue
        a, b = grid.branches[k].ends
        edges.append(AuxEdge(k, comp_of[a], comp_of[b]))
    return AuxGraph(
        tuple(c.p_balance for c in comps),
        tuple(c.q_balance for c in comps),
        tuple(edges),
        tuple(comps),
        grid,
        config,
    )


@dataclass(frozen=True)
class MergeResult:
    groups: tuple[tuple[int, ...], ...]
    balance_p: tuple[float, ...]
    balance_q: tuple[float, ...]

    @property
    def shed_p(self) -> float:
        return math.fsum(max(0.0, -b) for b in self.balance_p)

    @property
    def shed_q(self) -> float:
        return math.fsum(max(0.0, -b) for b in self.balance_q)


def merged_balance(aux: AuxGraph, closed: Iterable[int]) -> MergeResult:
    """Group aux nodes joined by the ``closed`` tie indices and sum their balances."""
    n = aux.n_nodes
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for t in closed:
        e = aux.edge(t)
        ra, rb = find(e.node_a), find(e.node_b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    members: dict[int, list[int]] = {}
    for i in range(n):
        members.setdefault(find(i), []).append(i)
    groups = tuple(tuple(members[r]) for r in sorted(members))
    return MergeResult(
        groups,
        tuple(math.fsum(aux.balances_p[i] for i in g) for g in groups),
        tuple(math.fsum(aux.balances_q[i] for i in g) for g in groups),
    )
