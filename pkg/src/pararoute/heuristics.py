"""Constructive route builders and a small local search.

Score matrices here live on the merged graph: index 0 is the depot (both
copies) and ``1..m`` are the customers, matching instance numbering.
"""

from __future__ import annotations

import numpy as np

from .instance import Instance
from .milp import Routes, route_cost


def merged_costs(instance: Instance) -> np.ndarray:
    return np.asarray(instance.costs[:-1, :-1])


def greedy_routes(instance: Instance, scores: np.ndarray) -> Routes:
    """Build routes by repeatedly moving to the best-scoring unvisited customer.

    Only customers that still fit in the vehicle are eligible; ties go to the
    cheaper move, then the lower index. When nothing fits, the vehicle returns
    and a new route starts from the depot.
    """
    q = instance.demands
    Q = instance.capacity
    c = merged_costs(instance)
    unvisited = set(instance.customers)
    paths = []
    while unvisited:
        cur, load, path = 0, 0, [0]
        while True:
            fits = [j for j in unvisited if load + q[j] <= Q]
            if not fits:
                break
            nxt = max(fits, key=lambda j: (scores[cur, j], -c[cur, j], -j))
            path.append(nxt)
            load += int(q[nxt])
            unvisited.discard(nxt)
            cur = nxt
        path.append(instance.end)
        paths.append(path)
    return Routes.from_paths(instance, paths)


def nearest_neighbor_routes(instance: Instance) -> Routes:
    return greedy_routes(instance, -merged_costs(instance))


def _path_cost(c: np.ndarray, path: list[int]) -> float:
    return float(sum(c[a, b] for a, b in zip(path, path[1:])))


def improve_routes(instance: Instance, routes: Routes, max_rounds: int = 50) -> Routes:
    """First-improvement 2-opt inside routes plus single-customer relocation."""
    c = merged_costs(instance)
    q = instance.demands
    Q = instance.capacity
    # work on depot-merged closed paths [0, ..., 0]
    paths = [[0, *p[1:-1], 0] for p in routes.paths]
    loads = [int(sum(q[v] for v in p)) for p in paths]
    eps = 1e-15
    for _ in range(max_rounds):
        improved = False
        for p in paths:
            n = len(p)
            for a in range(n - 3):
                for b in range(a + 2, n - 1):
                    delta = c[p[a], p[b]] + c[p[a + 1], p[b + 1]] - c[p[a], p[a + 1]] - c[p[b], p[b + 1]]
                    if delta < -eps:
                        p[a + 1 : b + 1] = p[a + 1 : b + 1][::-1]
                        improved = True
        for r1 in range(len(paths)):
            k = 1
            while k < len(paths[r1]) - 1:
                p1 = paths[r1]
                v = p1[k]
                removal = c[p1[k - 1], v] + c[v, p1[k + 1]] - c[p1[k - 1], p1[k + 1]]
                best = (-eps, None, None)
                for r2, p2 in enumerate(paths):
                    if r2 != r1 and loads[r2] + q[v] > Q:
                        continue
                    for t in range(len(p2) - 1):
                        if r2 == r1 and t in (k - 1, k):
                            continue
                        gain = removal - (c[p2[t], v] + c[v, p2[t + 1]] - c[p2[t], p2[t + 1]])
                        if gain > best[0] + eps:
                            best = (gain, r2, t)
                if best[1] is None:
                    k += 1
                    continue
                _, r2, t = best
                del p1[k]
                p2 = paths[r2]
                if r2 == r1 and t > k:
                    t -= 1
                p2.insert(t + 1, v)
                loads[r1] -= int(q[v])
                loads[r2] += int(q[v])
                improved = True
        paths = [p for p in paths if len(p) > 2]
        loads = [int(sum(q[v] for v in p)) for p in paths]
        if not improved:
            break
    end = instance.end
    out = Routes.from_paths(instance, [[0, *p[1:-1], end] for p in paths])
    if route_cost(instance, out) > route_cost(instance, routes):
        return routes
    return out
