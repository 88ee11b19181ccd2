"""Build multi-feeder test systems from one base feeder, and count their radial topologies."""
from __future__ import annotations

import random
import statistics
from dataclasses import dataclass, field, replace
from typing import Sequence

from .grid import TIE, Branch, Bus, Generator, Grid, GridError, GridParseError, validate

__all__ = [
    "TieSpec",
    "GenSpec",
    "feeder_tag",
    "parse_tie_spec",
    "load_tie_spec",
    "generate",
    "count_radial_topologies",
    "DG_SHARE_RANGE",
]

# p_max of a placed DG as a share of its feeder's total load
DG_SHARE_RANGE = (0.02, 0.10)


def feeder_tag(i: int) -> str:
    """``Fa``, ``Fb``, ... ``Fz``, ``Fba``, ... for replica ``i`` (0-based)."""
    letters = ""
    while True:
        letters = chr(ord("a") + i % 26) + letters
        i //= 26
        if i == 0:
            break
    return "F" + letters


@dataclass(frozen=True)
class TieSpec:
    feeder_a: str
    bus_a: str
    feeder_b: str
    bus_b: str
    r: float | None = None
    x: float | None = None
    s_max: float | None = None


@dataclass(frozen=True)
class GenSpec:
    base_feeder: Grid
    replicas: int = 4
    tie_spec: Sequence[TieSpec] = field(default_factory=tuple)
    dg_count: int = 0
    seed: int = 0
    load_scale: float = 1.0


def parse_tie_spec(text: str) -> list[TieSpec]:
    """One tie per line: ``Fd 252 Fc 266 [r=.. x=.. smax=..]``; ``#`` starts a comment."""
    ties = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        if len(toks) < 4:
            raise GridParseError("tie needs two feeder/bus pairs", lineno, 1)
        extra = {}
        for tok in toks[4:]:
            key, sep, value = tok.partition("=")
            if not sep or key not in ("r", "x", "smax"):
                raise GridParseError(f"unexpected token {tok!r}", lineno, raw.find(tok) + 1)
            try:
                extra[key] = float(value)
            except ValueError:
                raise GridParseError(f"bad number {value!r}", lineno, raw.find(tok) + 1) from None
        ties.append(TieSpec(toks[0], toks[1], toks[2], toks[3],
                            extra.get("r"), extra.get("x"), extra.get("smax")))
    return ties


def load_tie_spec(path) -> list[TieSpec]:
    with open(path, encoding="utf-8") as fh:
        return parse_tie_spec(fh.read())


def generate(spec: GenSpec) -> Grid:
    """Replicate the base feeder, add the cross-feeder ties and place DGs."""
    base = spec.base_feeder
    if spec.replicas < 1:
        raise GridError("replicas must be at least 1")
    if len(base.slack_ids) != 1:
        raise GridError("base feeder must have exactly one slack bus")
    if spec.dg_count < 0:
        raise GridError("dg_count must be non-negative")
    rng = random.Random(spec.seed)
    tags = [feeder_tag(i) for i in range(spec.replicas)]

    def nid(tag, bid):
        return f"{tag}:{bid}"

    buses, branches = [], []
    for tag in tags:
        for b in base.buses:
            buses.append(replace(b, id=nid(tag, b.id), p_load=b.p_load * spec.load_scale,
                                 q_load=b.q_load * spec.load_scale))
        for br in base.branches:
            branches.append(replace(br, from_bus=nid(tag, br.from_bus), to_bus=nid(tag, br.to_bus)))

    known = {b.id for b in buses}
    r_def = statistics.fmean(br.r for br in base.branches) if base.branches else 0.01
    x_def = statistics.fmean(br.x for br in base.branches) if base.branches else 0.01
    s_def = max((br.s_max for br in base.branches), default=1e6)
    for t in spec.tie_spec:
        a, b = nid(t.feeder_a, t.bus_a), nid(t.feeder_b, t.bus_b)
        for end in (a, b):
            if end not in known:
                raise GridError(f"tie references absent bus {end!r}")
        branches.append(Branch(a, b, r_def if t.r is None else t.r, x_def if t.x is None else t.x,
                               s_def if t.s_max is None else t.s_max, TIE, True))

    candidates = [i for i, b in enumerate(buses) if not b.is_slack]
    if spec.dg_count > len(candidates):
        raise GridError(f"cannot place {spec.dg_count} DGs on {len(candidates)} buses")
    feeder_load = spec.load_scale * base.total_p_load
    lo, hi = DG_SHARE_RANGE
    for i in sorted(rng.sample(candidates, spec.dg_count)):
        cap = round(rng.uniform(lo, hi) * feeder_load, 3)
        buses[i] = replace(buses[i], dg=Generator(0.0, cap, -cap, cap))

    grid = Grid(tuple(buses), tuple(branches), base.u_nominal, base.big_m, base.s_base, base.z_base)
    problems = validate(grid)
    if problems:
        raise GridError("; ".join(problems))
    return grid


# ---------------------------------------------------------------------------
# counting


def _bareiss_det(mat: list[list[int]]) -> int:
    """Exact determinant of an integer matrix by fraction-free elimination."""
    a = [row[:] for row in mat]
    n = len(a)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def count_radial_topologies(grid: Grid) -> int:
    """Number of switch states whose energized grid is radial with every bus supplied.

    Unswitchable branches are always closed and are contracted; all slack
    buses are merged into one root so that each counted topology is a spanning
    forest with one slack per tree. The count is the matrix-tree determinant
    of the contracted multigraph. A loop of unswitchable branches gives 0.
    Grids without a slack count spanning trees of each connected part.
    """
    n = len(grid.buses)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
        return True

    idx = grid.bus_index
    for br in grid.branches:
        if not br.has_switch and not union(idx(br.from_bus), idx(br.to_bus)):
            return 0
    slacks = [idx(s) for s in grid.slack_ids]
    for s in slacks[1:]:
        if not union(slacks[0], s):
            return 0  # two substations joined by unswitchable branches

    edges = []
    for br in grid.branches:
        if br.has_switch:
            a, b = find(idx(br.from_bus)), find(idx(br.to_bus))
            if a != b:
                edges.append((a, b))
    nodes = sorted({find(i) for i in range(n)})
    root = find(slacks[0]) if slacks else None

    # peel degree-1 nodes: they sit on every spanning tree through their only edge
    adj: dict[int, list[int]] = {v: [] for v in nodes}
    for e, (a, b) in enumerate(edges):
        adj[a].append(e)
        adj[b].append(e)
    alive_edge = [True] * len(edges)
    degree = {v: len(adj[v]) for v in nodes}
    stack = [v for v in nodes if degree[v] == 1 and v != root]
    removed = set()
    while stack:
        v = stack.pop()
        if v in removed or degree[v] != 1:
            continue
        removed.add(v)
        e = next(e for e in adj[v] if alive_edge[e])
        alive_edge[e] = False
        a, b = edges[e]
        u = b if a == v else a
        degree[v] = 0
        degree[u] -= 1
        if degree[u] == 1 and u != root:
            stack.append(u)

    rest = [v for v in nodes if v not in removed]
    live = [edges[e] for e in range(len(edges)) if alive_edge[e]]
    comp = {v: v for v in rest}

    def cfind(a):
        while comp[a] != a:
            comp[a] = comp[comp[a]]
            a = comp[a]
        return a

    for a, b in live:
        ra, rb = cfind(a), cfind(b)
        if ra != rb:
            comp[ra] = rb
    parts: dict[int, list[int]] = {}
    for v in rest:
        parts.setdefault(cfind(v), []).append(v)
    if root is not None and len(parts) > 1:
        return 0  # some bus can never reach a slack

    total = 1
    for members in parts.values():
        if len(members) == 1:
            continue
        drop = root if root in members else members[0]
        keep = [v for v in members if v != drop]
        pos = {v: i for i, v in enumerate(keep)}
        lap = [[0] * len(keep) for _ in keep]
        mset = set(members)
        for a, b in live:
            if a not in mset:
                continue
            for u, w in ((a, b), (b, a)):
                if u in pos:
                    lap[pos[u]][pos[u]] += 1
                    if w in pos:
                        lap[pos[u]][pos[w]] -= 1
        total *= _bareiss_det(lap)
    return total
