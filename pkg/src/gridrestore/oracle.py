"""Exhaustive reference implementations used to cross-check the search and shed selection.

Nothing here calls into the search, islanding-merge or shed-selection code;
only the data types are shared.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from .grid import Branch, Bus, Generator, Grid
from .islanding import AuxGraph, Component
from .shed import ShedSet

__all__ = [
    "OracleLimit",
    "BruteForceResult",
    "brute_force_min_shed",
    "brute_force_min_shed_recursive",
    "brute_force_shed_set",
    "random_aux",
    "random_tree_grid",
]

MAX_ORACLE_TIES = 20
MAX_ORACLE_BUSES = 20


class OracleLimit(ValueError):
    pass


@dataclass(frozen=True)
class BruteForceResult:
    min_shed: float
    all_optimal_subsets: list[frozenset[int]]


def _system_shed(n, balances, edges, closed_positions):
    adj = [[] for _ in range(n)]
    for i in closed_positions:
        a, b = edges[i]
        adj[a].append(b)
        adj[b].append(a)
    seen = [False] * n
    shed = 0.0
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        stack, total = [s], 0.0
        while stack:
            u = stack.pop()
            total += balances[u]
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        if total < 0:
            shed -= total
    return shed


def _candidates(aux: AuxGraph):
    cands = [e for e in aux.edges if e.node_a != e.node_b]
    if len(cands) > MAX_ORACLE_TIES:
        raise OracleLimit(f"{len(cands)} ties exceed the oracle limit of {MAX_ORACLE_TIES}")
    return cands


def _finish(results, tol):
    best = min(s for s, _ in results)
    hits = [c for s, c in results if s <= best + tol]
    fewest = min(len(c) for c in hits)
    subsets = sorted((c for c in hits if len(c) == fewest), key=sorted)
    return BruteForceResult(best, subsets)


def brute_force_min_shed(aux: AuxGraph, tol: float = 1e-9) -> BruteForceResult:
    """Evaluate every closure subset; return the minimum shed and the smallest closures reaching it."""
    cands = _candidates(aux)
    edges = [(e.node_a, e.node_b) for e in cands]
    m = len(cands)
    results = []
    for mask in range(1 << m):
        closed = [i for i in range(m) if mask >> i & 1]
        shed = _system_shed(aux.n_nodes, aux.balances_p, edges, closed)
        results.append((shed, frozenset(cands[i].tie_index for i in closed)))
    return _finish(results, tol)


def brute_force_min_shed_recursive(aux: AuxGraph, tol: float = 1e-9) -> BruteForceResult:
    """Same answer as :func:`brute_force_min_shed`, via include/exclude recursion on groups."""
    cands = _candidates(aux)
    results = []

    def rec(i, groups, closed):
        if i == len(cands):
            shed = sum(-t for t in groups.values() if t < 0)
            results.append((shed, frozenset(closed)))
            return
        rec(i + 1, groups, closed)
        e = cands[i]
        ga = next(g for g in groups if e.node_a in g)
        gb = next(g for g in groups if e.node_b in g)
        if ga is gb or ga == gb:
            merged = groups
        else:
            merged = {g: t for g, t in groups.items() if g != ga and g != gb}
            merged[ga | gb] = groups[ga] + groups[gb]
        rec(i + 1, merged, closed + [e.tie_index])

    start = {frozenset([v]): aux.balances_p[v] for v in range(aux.n_nodes)}
    rec(0, start, [])
    return _finish(results, tol)


def brute_force_shed_set(component: Component, deficit: float, grid: Grid,
                         deficit_q: float = 0.0) -> ShedSet:
    """Enumerate every downward-closed bus set of the island and keep the cheapest cover."""
    buses = list(component.buses)
    if len(buses) > MAX_ORACLE_BUSES:
        raise OracleLimit(f"component has {len(buses)} buses, oracle limit is {MAX_ORACLE_BUSES}")
    if deficit <= 1e-6 and deficit_q <= 1e-6:
        return ShedSet.empty(component.id)

    adj = {b: [] for b in buses}
    for k in component.energized_branches:
        a, b = grid.branches[k].ends
        adj[a].append((b, k))
        adj[b].append((a, k))
    parent, pbranch = {component.root: None}, {}
    queue = [component.root]
    for u in queue:
        for v, k in adj[u]:
            if v not in parent:
                parent[v] = u
                pbranch[v] = k
                queue.append(v)
    others = [b for b in buses if b != component.root]

    best = None
    for mask in range(1, 1 << len(others)):
        chosen = {others[i] for i in range(len(others)) if mask >> i & 1}
        ok = True
        for b in chosen:
            if grid.bus(b).is_source:
                ok = False
                break
        if not ok:
            continue
        # downward closed: every non-chosen bus has a non-chosen parent or is the root
        for b in others:
            if b not in chosen and parent[b] in chosen:
                ok = False
                break
        if not ok:
            continue
        tops = sorted(b for b in chosen if parent[b] not in chosen)
        if any(not grid.branches[pbranch[t]].has_switch for t in tops):
            continue
        p = sum(grid.bus(b).p_load for b in chosen)
        q = sum(grid.bus(b).q_load for b in chosen)
        if p < deficit - 1e-6 or q < deficit_q - 1e-6:
            continue
        impact = sum(grid.bus(b).weight * grid.bus(b).p_load for b in chosen)
        key = (impact, p, tops)
        if best is None or key < best[0]:
            best = (key, chosen, q)
    if best is None:
        raise ValueError("no bus set covers the deficit")
    (impact, p, tops), chosen, q = best
    return ShedSet(component.id, tuple(sorted(chosen)), p, q, impact,
                   frozenset(pbranch[t] for t in tops))


# ---------------------------------------------------------------------------
# random instances


def random_aux(rng: random.Random, max_nodes: int = 10, max_ties: int = 12,
               redundant: bool = True) -> AuxGraph:
    """Integer-balance aux graph; integer values keep float sums exact."""
    n = rng.randint(2, max_nodes)
    balances = [rng.randint(-60, 40) for _ in range(n)]
    m = rng.randint(0, max_ties)
    edges = []
    for _ in range(m):
        a = rng.randrange(n)
        b = a if redundant and rng.random() < 0.1 else rng.randrange(n)
        edges.append((a, b))
    return AuxGraph.from_balances(balances, edges)


def random_tree_grid(rng: random.Random, n_buses: int = 12, integer: bool = True,
                     switch_prob: float = 1.0, dg_prob: float = 0.0) -> Grid:
    """Random radial grid rooted at slack bus ``b0`` with random loads and weights."""
    buses = [Bus("b0", 0.0, 0.0, 1.0, None, True)]
    branches = []
    for i in range(1, n_buses):
        if integer:
            p = float(rng.randint(0, 20))
            w = float(rng.randint(1, 5))
        else:
            p = rng.uniform(0, 20)
            w = rng.uniform(0.5, 5)
        q = round(p * rng.choice([0.0, 0.25, 0.5]), 6)
        dg = None
        if rng.random() < dg_prob:
            cap = float(rng.randint(5, 30))
            dg = Generator(0.0, cap, -cap, cap)
        buses.append(Bus(f"b{i}", p, q, w, dg))
        par = rng.randrange(i)
        branches.append(Branch(f"b{par}", f"b{i}", rng.uniform(0.01, 0.1), rng.uniform(0.0, 0.1),
                               1e6, "normal", rng.random() < switch_prob))
    return Grid(tuple(buses), tuple(branches))
