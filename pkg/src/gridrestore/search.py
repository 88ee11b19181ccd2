"""Minimum-shed estimation and the order-canonical tie-removal search."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import kernels
from .grid import Configuration
from .islanding import AuxGraph, merged_balance

__all__ = [
    "DEFAULT_MAX_TIES",
    "SHED_TOL",
    "TooManyTies",
    "ShedEstimate",
    "Rejection",
    "SearchResult",
    "estimate_min_shed",
    "enumerate_configs",
    "select_optimal",
]

logger = logging.getLogger(__name__)

DEFAULT_MAX_TIES = 30
SHED_TOL = 1e-6


class TooManyTies(ValueError):
    pass


@dataclass(frozen=True)
class ShedEstimate:
    p: float
    q: float


@dataclass(frozen=True)
class Rejection:
    closed: frozenset[int]
    violations: tuple


@dataclass
class SearchResult:
    min_shed_p: float
    min_shed_q: float
    optimal_configs: list[frozenset[int]]
    explored: int
    pruned: int
    elapsed: float
    # closure count -> closure sets achieving the reference, best levels only
    levels: dict[int, list[frozenset[int]]] = field(default_factory=dict)
    rejected: list[Rejection] = field(default_factory=list)
    memo_hits: int = 0
    n_candidates: int = 0
    backend: str = "python"
    base: Configuration | None = None


def estimate_min_shed(aux: AuxGraph) -> ShedEstimate:
    """System shed with every non-redundant tie closed: the reference minimum."""
    merged = merged_balance(aux, [e.tie_index for e in aux.candidate_edges])
    return ShedEstimate(merged.shed_p, merged.shed_q)


def _split(seq: Sequence[int], parts: int) -> list[list[int]]:
    return [list(seq[i::parts]) for i in range(parts) if seq[i::parts]]


def enumerate_configs(
    aux: AuxGraph,
    reference_shed: float,
    *,
    prune: bool = True,
    max_ties: int = DEFAULT_MAX_TIES,
    feasibility: Callable[[frozenset[int]], Sequence] | None = None,
    workers: int = 1,
    backend: str | None = None,
    keep_levels: int = 3,
) -> SearchResult:
    """Find the tie-closure sets that reach ``reference_shed`` with the most ties removed.

    Removal sets are expanded in increasing tie order so every subset is seen
    once. With ``prune`` a subset whose shed already exceeds the reference is
    cut together with all its supersets, which is sound because removing ties
    never lowers the merged shed.

    ``feasibility`` maps a closure set to a list of violations; closure sets
    with violations are recorded in ``rejected`` and the next-best removal
    level is tried.
    """
    cands = aux.candidate_edges
    m = len(cands)
    if m > max_ties:
        raise TooManyTies(f"{m} candidate ties exceed the cap of {max_ties}; raise max_ties to search")
    edge_a = [e.node_a for e in cands]
    edge_b = [e.node_b for e in cands]
    kern = kernels.get(backend, m)
    args = (aux.n_nodes, edge_a, edge_b, list(aux.balances_p), list(aux.balances_q),
            float(reference_shed), SHED_TOL, prune)

    t0 = time.perf_counter()
    roots = list(range(m))
    solutions, explored, pruned, hits = kern.enumerate_removals(*args, [], True)
    root_pruned = prune and pruned > 0
    if not root_pruned and roots:
        chunks = _split(roots, max(1, min(workers, m)))
        if len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                parts = list(pool.map(lambda ch: kern.enumerate_removals(*args, ch, False), chunks))
        else:
            parts = [kern.enumerate_removals(*args, chunks[0], False)]
        for sol, ex, pr, hi in parts:
            solutions.extend(sol)
            explored += ex
            pruned += pr
            hits += hi

    full = (1 << m) - 1
    by_level: dict[int, list[tuple[frozenset[int], float, float]]] = {}
    for removed, sp, sq in solutions:
        closed_mask = full ^ removed
        closed = frozenset(cands[i].tie_index for i in range(m) if closed_mask >> i & 1)
        by_level.setdefault(len(closed), []).append((closed, sp, sq))
    kept = sorted(by_level)[:keep_levels]
    levels = {n: sorted((c for c, _, _ in by_level[n]), key=sorted) for n in kept}

    optimal: list[frozenset[int]] = []
    rejected: list[Rejection] = []
    shed_p = shed_q = math.nan
    for n in kept:
        level = sorted(by_level[n], key=lambda t: sorted(t[0]))
        passing = []
        for closed, sp, sq in level:
            if feasibility is not None:
                viol = tuple(feasibility(closed))
                if viol:
                    rejected.append(Rejection(closed, viol))
                    continue
            passing.append((closed, sp, sq))
        if passing:
            optimal = [c for c, _, _ in passing]
            shed_p = min(sp for _, sp, _ in passing)
            shed_q = min(sq for _, _, sq in passing)
            break
    elapsed = time.perf_counter() - t0
    logger.debug("search: m=%d explored=%d pruned=%d optimal=%d", m, explored, pruned, len(optimal))
    return SearchResult(
        shed_p, shed_q, optimal, explored, pruned, elapsed, levels, rejected, hits, m,
        kernels.BACKEND if kern is kernels.compiled_kernels else "python", aux.base,
    )


def select_optimal(result: SearchResult) -> Configuration:
    """Lexicographically smallest optimal closure set, as a Configuration."""
    if not result.optimal_configs:
        raise ValueError("search produced no feasible configuration")
    best = min(result.optimal_configs, key=sorted)
    base = result.base if result.base is not None else Configuration()
    return base.with_switching(close=best)
