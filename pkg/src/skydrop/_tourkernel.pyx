# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tour-construction kernels: nearest-neighbor + first-improvement 2-opt.

Must stay move-for-move identical to routing_py.py: same tie-breaks, same scan
order, same improvement epsilon, so compiled and fallback builds produce
byte-identical plans.
"""

EPS = 1e-9


def tour_length(double[:, ::1] dist, order):
    cdef double total = 0.0
    cdef Py_ssize_t prev = 0, node
    for node in order:
        total += dist[prev, node]
        prev = node
    total += dist[prev, 0]
    return total


def nn_order(double[:, ::1] dist):
    """Visit order over nodes 1..n-1 starting from node 0; ties pick lower index."""
    cdef Py_ssize_t n = dist.shape[0]
    cdef Py_ssize_t current = 0, best, k, visited_count = 0
    cdef double best_d
    cdef list order = []
    visited = [False] * n
    visited[0] = True
    while visited_count < n - 1:
        best = -1
        best_d = 0.0
        for k in range(1, n):
            if not visited[k]:
                if best < 0 or dist[current, k] < best_d:
                    best = k
                    best_d = dist[current, k]
        visited[best] = True
        visited_count += 1
        order.append(best)
        current = best
    return order


def two_opt(double[:, ::1] dist, order):
    """First-improvement 2-opt on the closed tour 0 -> order -> 0.

    Scan i ascending then j ascending; apply the first improving reversal and
    restart the scan; stop when a full pass finds no improvement.
    """
    cdef list tour = list(order)
    cdef Py_ssize_t n = len(tour)
    cdef Py_ssize_t i, j, a, b, c, d, lo, hi
    cdef double delta
    cdef bint improved = True
    if n < 2:
        return tour
    while improved:
        improved = False
        for i in range(n - 1):
            a = 0 if i == 0 else tour[i - 1]
            b = tour[i]
            for j in range(i + 1, n):
                c = tour[j]
                d = 0 if j == n - 1 else tour[j + 1]
                delta = (dist[a, c] + dist[b, d]) - (dist[a, b] + dist[c, d])
                if delta < -EPS:
                    lo = i
                    hi = j
                    while lo < hi:
                        tour[lo], tour[hi] = tour[hi], tour[lo]
                        lo += 1
                        hi -= 1
                    improved = True
                    break
            if improved:
                break
    return tour
