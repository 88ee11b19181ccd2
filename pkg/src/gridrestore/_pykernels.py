"""Pure-Python search kernels (fallback when the compiled module is unavailable).

Masks are integers over the candidate-edge positions ``0..m-1``.
"""
from __future__ import annotations

import math

# stop inserting into the partition memo beyond this many entries
MEMO_LIMIT = 1 << 20


def _shed_from_labels(labels, bal_p, bal_q):
    gp: dict[int, float] = {}
    gq: dict[int, float] = {}
    for i, r in enumerate(labels):
        gp[r] = gp.get(r, 0.0) + bal_p[i]
        gq[r] = gq.get(r, 0.0) + bal_q[i]
    sp = math.fsum(-v for v in gp.values() if v < 0)
    sq = math.fsum(-v for v in gq.values() if v < 0)
    return sp, sq


def _labels_from_scratch(n_nodes, edge_a, edge_b, mask):
    parent = list(range(n_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    i = 0
    while mask:
        if mask & 1:
            ra, rb = find(edge_a[i]), find(edge_b[i])
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        mask >>= 1
        i += 1
    return tuple(find(v) for v in range(n_nodes))


def merged_shed(n_nodes, edge_a, edge_b, bal_p, bal_q, mask):
    """System shed (P, Q) with the edges in ``mask`` closed."""
    labels = _labels_from_scratch(n_nodes, edge_a, edge_b, mask)
    return _shed_from_labels(labels, bal_p, bal_q)


class _Evaluator:
    """Closure-mask -> group labels, derived from the mask minus its lowest edge."""

    def __init__(self, n_nodes, edge_a, edge_b, bal_p, bal_q):
        self.n = n_nodes
        self.ea = edge_a
        self.eb = edge_b
        self.bp = bal_p
        self.bq = bal_q
        self.memo: dict[int, tuple[int, ...]] = {0: tuple(range(n_nodes))}
        self.hits = 0

    def labels(self, mask):
        memo = self.memo
        got = memo.get(mask)
        if got is not None:
            self.hits += 1
            return got
        low = mask & -mask
        rest = memo.get(mask ^ low)
        if rest is None:
            labels = _labels_from_scratch(self.n, self.ea, self.eb, mask)
        else:
            self.hits += 1
            i = low.bit_length() - 1
            ra, rb = rest[self.ea[i]], rest[self.eb[i]]
            if ra == rb:
                labels = rest
            else:
                lo, hi = min(ra, rb), max(ra, rb)
                labels = tuple(lo if r == hi else r for r in rest)
        if len(memo) < MEMO_LIMIT:
            memo[mask] = labels
        return labels

    def shed(self, mask):
        return _shed_from_labels(self.labels(mask), self.bp, self.bq)


def enumerate_removals(n_nodes, edge_a, edge_b, bal_p, bal_q, ref_p, tol, prune,
                       roots, include_root):
    """Depth-first removal enumeration in increasing edge order.

    Visits removal set ``R`` and recurses into ``R | {i}`` for every ``i``
    above ``max(R)``, so each subset is reached once. A subset whose shed
    exceeds ``ref_p + tol`` is pruned with its whole subtree when ``prune``.

    ``roots`` lists first-removed edge positions to expand; ``include_root``
    also evaluates the empty removal set. Returns
    ``(solutions, explored, pruned, memo_hits)`` where solutions are
    ``(removal_mask, shed_p, shed_q)`` for subsets with shed <= ref + tol.
    """
    m = len(edge_a)
    full = (1 << m) - 1
    ev = _Evaluator(n_nodes, edge_a, edge_b, bal_p, bal_q)
    solutions = []
    explored = 0
    pruned = 0
    limit = ref_p + tol

    if include_root:
        explored += 1
        sp, sq = ev.shed(full)
        if sp > limit:
            if prune:
                return solutions, explored, 1, ev.hits
        else:
            solutions.append((0, sp, sq))

    stack = [(1 << i, i) for i in reversed(sorted(roots))]
    while stack:
        removed, last = stack.pop()
        explored += 1
        sp, sq = ev.shed(full ^ removed)
        if sp > limit:
            if prune:
                pruned += 1
                continue
        else:
            solutions.append((removed, sp, sq))
        for i in range(m - 1, last, -1):
            stack.append((removed | (1 << i), i))
    return solutions, explored, pruned, ev.hits
