# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled search kernels; same contract as ``_pykernels``.

Shed is recomputed from scratch per subset: a union-find pass over at most
63 edges is cheaper here than hashing a partition memo.
"""
from libc.stdlib cimport malloc, free

ctypedef unsigned long long u64

MAX_EDGES = 63


cdef inline int _find(int* parent, int a) nogil:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


cdef void _shed(int n, int m, const int* ea, const int* eb, const double* bp,
                const double* bq, u64 mask, int* parent, double* gp, double* gq,
                double* out_p, double* out_q) nogil:
    cdef int i, ra, rb
    cdef double sp = 0.0, sq = 0.0
    for i in range(n):
        parent[i] = i
        gp[i] = 0.0
        gq[i] = 0.0
    for i in range(m):
        if (mask >> i) & 1:
            ra = _find(parent, ea[i])
            rb = _find(parent, eb[i])
            if ra != rb:
                if ra < rb:
                    parent[rb] = ra
                else:
                    parent[ra] = rb
    for i in range(n):
        ra = _find(parent, i)
        gp[ra] += bp[i]
        gq[ra] += bq[i]
    for i in range(n):
        if gp[i] < 0:
            sp -= gp[i]
        if gq[i] < 0:
            sq -= gq[i]
    out_p[0] = sp
    out_q[0] = sq


cdef class _Buffers:
    cdef int n, m
    cdef int* ea
    cdef int* eb
    cdef double* bp
    cdef double* bq
    cdef int* parent
    cdef double* gp
    cdef double* gq

    def __cinit__(self, int n_nodes, edge_a, edge_b, bal_p, bal_q):
        cdef int i
        self.n = n_nodes
        self.m = len(edge_a)
        if self.m > MAX_EDGES:
            raise ValueError("compiled kernel supports at most 63 edges")
        self.ea = <int*> malloc(max(self.m, 1) * sizeof(int))
        self.eb = <int*> malloc(max(self.m, 1) * sizeof(int))
        self.bp = <double*> malloc(max(n_nodes, 1) * sizeof(double))
        self.bq = <double*> malloc(max(n_nodes, 1) * sizeof(double))
        self.parent = <int*> malloc(max(n_nodes, 1) * sizeof(int))
        self.gp = <double*> malloc(max(n_nodes, 1) * sizeof(double))
        self.gq = <double*> malloc(max(n_nodes, 1) * sizeof(double))
        if not (self.ea and self.eb and self.bp and self.bq and self.parent and self.gp and self.gq):
            raise MemoryError()
        for i in range(self.m):
            self.ea[i] = edge_a[i]
            self.eb[i] = edge_b[i]
        for i in range(n_nodes):
            self.bp[i] = bal_p[i]
            self.bq[i] = bal_q[i]

    def __dealloc__(self):
        free(self.ea)
        free(self.eb)
        free(self.bp)
        free(self.bq)
        free(self.parent)
        free(self.gp)
        free(self.gq)

    cdef void shed(self, u64 mask, double* sp, double* sq) nogil:
        _shed(self.n, self.m, self.ea, self.eb, self.bp, self.bq, mask,
              self.parent, self.gp, self.gq, sp, sq)


def merged_shed(int n_nodes, edge_a, edge_b, bal_p, bal_q, mask):
    cdef _Buffers buf = _Buffers(n_nodes, edge_a, edge_b, bal_p, bal_q)
    cdef double sp, sq
    buf.shed(<u64> mask, &sp, &sq)
    return sp, sq


def enumerate_removals(int n_nodes, edge_a, edge_b, bal_p, bal_q, double ref_p,
                       double tol, bint prune, roots, bint include_root):
    cdef _Buffers buf = _Buffers(n_nodes, edge_a, edge_b, bal_p, bal_q)
    cdef int m = buf.m
    cdef u64 full = ((<u64> 1) << m) - 1 if m > 0 else 0
    cdef double limit = ref_p + tol
    cdef double sp, sq
    cdef long long explored = 0, pruned = 0
    cdef u64 removed
    cdef int last, i, top = 0
    cdef u64* st_mask
    cdef int* st_last
    solutions = []

    if include_root:
        explored += 1
        buf.shed(full, &sp, &sq)
        if sp > limit:
            if prune:
                return solutions, explored, 1, 0
        else:
            solutions.append((0, sp, sq))

    # depth-first stack never holds more than m*(m+1)/2 + m entries
    cdef int cap = (m + 1) * (m + 2) // 2 + m + 1
    st_mask = <u64*> malloc(cap * sizeof(u64))
    st_last = <int*> malloc(cap * sizeof(int))
    if not st_mask or not st_last:
        free(st_mask)
        free(st_last)
        raise MemoryError()
    try:
        for r in sorted(roots, reverse=True):
            st_mask[top] = (<u64> 1) << <int> r
            st_last[top] = r
            top += 1
        while top > 0:
            top -= 1
            removed = st_mask[top]
            last = st_last[top]
            explored += 1
            buf.shed(full ^ removed, &sp, &sq)
            if sp > limit:
                if prune:
                    pruned += 1
                    continue
            else:
                solutions.append((removed, sp, sq))
            i = m - 1
            while i > last:
                st_mask[top] = removed | ((<u64> 1) << i)
                st_last[top] = i
                top += 1
                i -= 1
    finally:
        free(st_mask)
        free(st_last)
    return solutions, explored, pruned, 0
