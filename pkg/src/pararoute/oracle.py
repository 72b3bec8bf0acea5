"""Exact reference solvers for tiny instances.

``held_karp_tsp`` is the textbook bitmask dynamic program; ``exact_cvrp``
enumerates every set partition of the customers into capacity-feasible blocks
and routes each block optimally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .instance import Instance
from .milp import Routes

MAX_TSP_CUSTOMERS = 15
MAX_CVRP_CUSTOMERS = 8
TIE_TOL = 1e-12


class OracleSizeError(ValueError):
    pass


class OracleInfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    objective: float
    routes: Routes
    partitions_evaluated: int


def held_karp_tsp(
    costs: np.ndarray,
    customers: Sequence[int],
    start: int = 0,
    end: int | None = None,
) -> tuple[float, list[int]]:
    """Cheapest path ``start -> (all customers in some order) -> end``."""
    costs = np.asarray(costs, dtype=float)
    if end is None:
        end = len(costs) - 1
    nodes = list(customers)
    k = len(nodes)
    if k > MAX_TSP_CUSTOMERS:
        raise OracleSizeError(f"held_karp_tsp handles at most {MAX_TSP_CUSTOMERS} customers, got {k}")
    if k == 0:
        return float(costs[start, end]), [start, end]

    sub = costs[np.ix_(nodes, nodes)]
    full = 1 << k
    dp = np.full((full, k), np.inf)
    parent = np.full((full, k), -1, dtype=np.int64)
    for j in range(k):
        dp[1 << j, j] = costs[start, nodes[j]]
    bits = [1 << j for j in range(k)]
    for mask in range(1, full):
        row = dp[mask]
        if not np.isfinite(row).any():
            continue
        # extend every path ending in mask by one more node j outside mask
        ext = row[:, None] + sub  # ext[i, j] = dp[mask, i] + c(i, j)
        best_i = np.argmin(ext, axis=0)
        best = ext[best_i, np.arange(k)]
        for j in range(k):
            if mask & bits[j]:
                continue
            nm = mask | bits[j]
            if best[j] < dp[nm, j]:
                dp[nm, j] = best[j]
                parent[nm, j] = best_i[j]

    last_mask = full - 1
    closing = dp[last_mask] + costs[nodes, end]
    j = int(np.argmin(closing))
    total = float(closing[j])
    order = []
    mask = last_mask
    while j >= 0:
        order.append(nodes[j])
        pj = int(parent[mask, j])
        mask ^= 1 << j
        j = pj
    order.reverse()
    return total, [start, *order, end]


def brute_force_tsp(costs: np.ndarray, customers: Sequence[int], start: int = 0, end: int | None = None):
    """Exhaustive permutation search; only for cross-checking small cases."""
    from itertools import permutations

    costs = np.asarray(costs, dtype=float)
    if end is None:
        end = len(costs) - 1
    best, best_path = np.inf, None
    for perm in permutations(customers):
        path = [start, *perm, end]
        c = sum(costs[a, b] for a, b in zip(path, path[1:]))
        if c < best:
            best, best_path = c, path
    return float(best), best_path


def set_partitions(items: Sequence[int]) -> Iterator[list[list[int]]]:
    """All set partitions of ``items`` (restricted-growth order)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1 :]


def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def exact_cvrp(instance: Instance) -> OracleResult:
    """Optimal route plan by enumerating capacity-feasible customer partitions."""
    cust = list(instance.customers)
    if len(cust) > MAX_CVRP_CUSTOMERS:
        raise OracleSizeError(f"exact_cvrp handles at most {MAX_CVRP_CUSTOMERS} customers, got {len(cust)}")
    q = instance.demands
    Q = instance.capacity
    for i in cust:
        if q[i] > Q:
            raise OracleInfeasibleError(f"customer {i} demand {q[i]} exceeds capacity {Q}")

    tsp_cache: dict[tuple[int, ...], tuple[float, list[int]]] = {}

    def route(block: tuple[int, ...]):
        if block not in tsp_cache:
            tsp_cache[block] = held_karp_tsp(instance.costs, block, 0, instance.end)
        return tsp_cache[block]

    best_cost = np.inf
    best_key = None
    best_paths = None
    evaluated = 0
    for part in set_partitions(cust):
        if any(sum(q[i] for i in block) > Q for block in part):
            continue
        evaluated += 1
        blocks = [tuple(sorted(b)) for b in part]
        legs = [route(b) for b in blocks]
        cost = sum(c for c, _ in legs)
        paths = sorted(tuple(p) for _, p in legs)
        key = (len(paths), paths)
        if cost < best_cost - TIE_TOL or (abs(cost - best_cost) <= TIE_TOL and key < best_key):
            best_cost, best_key, best_paths = cost, key, paths
    return OracleResult(float(best_cost), Routes.from_paths(instance, best_paths), evaluated)
