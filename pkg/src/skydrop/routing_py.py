"""Pure-Python tour kernels, used when the compiled extension is unavailable.

Semantics must match _tourkernel.pyx exactly (tie-breaks, scan order, epsilon)
so a plan never depends on which backend happened to be importable.
"""

from __future__ import annotations

EPS = 1e-9


def tour_length(dist, order) -> float:
    total = 0.0
    prev = 0
    for node in order:
        total += dist[prev, node]
        prev = node
    return total + dist[prev, 0]


def nn_order(dist):
    """Visit order over nodes 1..n-1 starting from node 0; ties pick lower index."""
    n = dist.shape[0]
    visited = [False] * n
    visited[0] = True
    order = []
    current = 0
    for _ in range(n - 1):
        best = -1
        best_d = 0.0
        for k in range(1, n):
            if not visited[k] and (best < 0 or dist[current, k] < best_d):
                best = k
                best_d = dist[current, k]
        visited[best] = True
        order.append(best)
        current = best
    return order


def two_opt(dist, order):
    """First-improvement 2-opt on the closed tour 0 -> order -> 0.

    Scan i ascending then j ascending; apply the first improving reversal and
    restart the scan; stop when a full pass finds no improvement.
    """
    tour = list(order)
    n = len(tour)
    if n < 2:
        return tour
    improved = True
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
                    tour[i:j + 1] = reversed(tour[i:j + 1])
                    improved = True
                    break
            if improved:
                break
    return tour
