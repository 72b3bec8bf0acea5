import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_instance
from pararoute.heuristics import improve_routes, nearest_neighbor_routes
from pararoute.instance import Instance, euclidean_cost_matrix
from pararoute.milp import check_feasibility, route_cost
from pararoute.oracle import (
    MAX_CVRP_CUSTOMERS,
    MAX_TSP_CUSTOMERS,
    OracleInfeasibleError,
    OracleSizeError,
    bell_number,
    brute_force_tsp,
    exact_cvrp,
    held_karp_tsp,
    set_partitions,
)


def giant_tour_optimum(inst):
    """Independent CVRP reference: every customer order cut into consecutive routes."""
    c, q, Q, end = inst.costs, inst.demands, inst.capacity, inst.end
    cust = list(inst.customers)
    best = np.inf
    for perm in itertools.permutations(cust):
        m = len(perm)
        for cuts in itertools.product([0, 1], repeat=m - 1):
            routes, cur = [], [perm[0]]
            for v, cut in zip(perm[1:], cuts):
                if cut:
                    routes.append(cur)
                    cur = []
                cur.append(v)
            routes.append(cur)
            if any(sum(q[v] for v in r) > Q for r in routes):
                continue
            cost = sum(c[0, r[0]] + sum(c[a, b] for a, b in zip(r, r[1:])) + c[r[-1], end] for r in routes)
            best = min(best, cost)
    return best


def test_single_customer_tsp():
    c = euclidean_cost_matrix([(0, 0), (3, 4), (0, 0)])
    cost, tour = held_karp_tsp(c, [1])
    assert cost == 10.0 and tour == [0, 1, 2]


def test_unit_square_tour():
    c = euclidean_cost_matrix([(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)])
    cost, tour = held_karp_tsp(c, [1, 2, 3])
    assert cost == pytest.approx(4.0, abs=1e-12)
    assert tour[0] == 0 and tour[-1] == 4 and sorted(tour[1:-1]) == [1, 2, 3]


@pytest.mark.parametrize("k", range(1, 8))
def test_held_karp_matches_permutations(rng, k):
    pts = rng.uniform(size=(k + 1, 2))
    c = euclidean_cost_matrix(np.vstack([pts, pts[:1]]))
    hk, tour = held_karp_tsp(c, list(range(1, k + 1)))
    bf, _ = brute_force_tsp(c, list(range(1, k + 1)))
    assert hk == pytest.approx(bf, abs=1e-12)
    assert sum(c[a, b] for a, b in zip(tour, tour[1:])) == pytest.approx(hk, abs=1e-12)


def test_held_karp_on_subset():
    c = euclidean_cost_matrix([(0, 0), (1, 0), (5, 5), (2, 0), (0, 0)])
    cost, tour = held_karp_tsp(c, [1, 3])
    assert cost == pytest.approx(4.0, abs=1e-12)
    assert tour in ([0, 1, 3, 4], [0, 3, 1, 4])


def test_size_caps():
    c = np.zeros((MAX_TSP_CUSTOMERS + 3, MAX_TSP_CUSTOMERS + 3))
    with pytest.raises(OracleSizeError):
        held_karp_tsp(c, list(range(1, MAX_TSP_CUSTOMERS + 2)))
    big = small_instance(MAX_CVRP_CUSTOMERS + 1, 20, 0, mode="unit")
    with pytest.raises(OracleSizeError):
        exact_cvrp(big)


def test_oversized_demand():
    inst = Instance(*_raw([(0, 0), (1, 0)], [5], 3))
    with pytest.raises(OracleInfeasibleError):
        exact_cvrp(inst)


def _raw(points, demands, capacity):
    pts = [points[0], *points[1:], points[0]]
    return np.array(pts, float), np.array([0, *demands, 0]), capacity, euclidean_cost_matrix(pts)


def test_one_customer_plan():
    inst = Instance.from_points((0, 0), [(0.3, 0.4)], [2], 2)
    res = exact_cvrp(inst)
    assert res.objective == pytest.approx(1.0, abs=1e-15)
    assert res.routes.paths == ((0, 1, 2),)


def test_frozen_line_instances():
    # customers at 1 and 2 on a line; hand-computed optima
    split = exact_cvrp(Instance.from_points((0, 0), [(1, 0), (2, 0)], [1, 1], 1))
    assert split.objective == pytest.approx(6.0, abs=1e-12)
    assert split.routes.paths == ((0, 1, 3), (0, 2, 3))
    merged = exact_cvrp(Instance.from_points((0, 0), [(1, 0), (2, 0)], [1, 1], 2))
    assert merged.objective == pytest.approx(4.0, abs=1e-12)
    assert len(merged.routes) == 1


def test_ties_prefer_fewer_routes():
    # opposite customers: one route or two routes both cost 4
    inst = Instance.from_points((0, 0), [(1, 0), (-1, 0)], [1, 1], 2)
    res = exact_cvrp(inst)
    assert res.objective == pytest.approx(4.0, abs=1e-12)
    assert len(res.routes) == 1


@pytest.mark.parametrize("n", range(0, 9))
def test_partition_count_is_bell(n):
    parts = list(set_partitions(list(range(n))))
    assert len(parts) == bell_number(n)
    assert len({tuple(sorted(tuple(sorted(b)) for b in p)) for p in parts}) == len(parts)
    assert [bell_number(k) for k in range(6)] == [1, 1, 2, 5, 15, 52]


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 6), capacity=st.integers(2, 6), seed=st.integers(0, 10**6))
def test_exact_cvrp_matches_giant_tour_enumeration(n, capacity, seed):
    inst = small_instance(n, capacity, seed, max_group=capacity)
    res = exact_cvrp(inst)
    assert check_feasibility(inst, res.routes) == []
    assert res.objective == pytest.approx(route_cost(inst, res.routes), abs=1e-15)
    assert res.objective == pytest.approx(giant_tour_optimum(inst), abs=1e-12)
    assert 0 < res.partitions_evaluated <= bell_number(inst.n_customers)


@pytest.mark.parametrize("seed", range(8))
def test_single_block_when_capacity_is_ample(seed):
    inst = small_instance(7, 7, seed)
    res = exact_cvrp(inst)
    hk, _ = held_karp_tsp(inst.costs, list(inst.customers))
    assert res.objective == pytest.approx(hk, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_oracle_below_heuristics(seed):
    inst = small_instance(8, 4, seed)
    opt = exact_cvrp(inst).objective
    nn = nearest_neighbor_routes(inst)
    assert opt <= route_cost(inst, nn) + 1e-12
    assert opt <= route_cost(inst, improve_routes(inst, nn)) + 1e-12
