import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_instance
from pararoute.instance import Instance
from pararoute.milp import (
    ModelError,
    ModelInfeasibleError,
    RouteExtractionError,
    Routes,
    SubtourError,
    admissible_arcs,
    assignment_to_routes,
    build_model,
    check_feasibility,
    evaluate_objective,
    expected_counts,
    lp_residuals,
    route_cost,
    routes_to_assignment,
)
from pararoute.simplex import INFEASIBLE, OPTIMAL, relax, solve_lp


def line_instance(demands, capacity):
    pts = [(float(k + 1), 0.0) for k in range(len(demands))]
    return Instance.from_points((0.0, 0.0), pts, demands, capacity)


def test_two_customer_model_counts():
    model = build_model(line_instance([1, 1], 2))
    assert set(model.arcs) == {(0, 1), (0, 2), (1, 2), (2, 1), (1, 3), (2, 3)}
    assert model.n_arcs == 6
    assert len(model.rows_tagged("degree")) == 2
    assert len(model.rows_tagged("flow")) == 2
    assert len(model.rows_tagged("mtz")) == 4


@pytest.mark.parametrize("m", [1, 2, 5, 9])
def test_counts_match_formula(m):
    model = build_model(line_instance([1] * m, m))
    counts = expected_counts(m)
    assert model.n_arcs == counts["arcs"] == m * (m + 1)
    assert len(model.load_nodes) == counts["loads"]
    for tag in ("degree", "flow", "mtz"):
        assert len(model.rows_tagged(tag)) == counts[tag]
    arcs = admissible_arcs(model.instance)
    end = model.instance.end
    assert all(j != 0 and i != end and (i, j) != (0, end) for i, j in arcs)


def test_demand_above_capacity_rejected():
    with pytest.raises(ModelInfeasibleError, match="exceeds capacity"):
        build_model(line_instance([1, 4], 3))


def test_fleet_rows_optional():
    inst = line_instance([1, 1, 1], 3)
    assert build_model(inst).rows_tagged("fleet") == []
    assert len(build_model(inst, min_vehicles=1, max_vehicles=2).rows_tagged("fleet")) == 2


def test_objective_examples():
    inst = line_instance([1], 1)
    model = build_model(inst)
    assert evaluate_objective(model, {a: 0.0 for a in model.arcs}) == 0.0
    one_route = {(0, 1): 1.0, (1, 2): 1.0}
    assert evaluate_objective(model, one_route) == pytest.approx(2 * inst.costs[0, 1], abs=1e-15)

    inst = line_instance([1, 1], 2)
    model = build_model(inst)
    frac = {a: 0.5 for a in model.arcs}
    expected = 0.5 * sum(inst.costs[i, j] for i, j in model.arcs)
    assert evaluate_objective(model, frac) == pytest.approx(expected, abs=1e-15)
    named = {f"x[{i},{j}]": 0.5 for i, j in model.arcs}
    assert evaluate_objective(model, named) == pytest.approx(expected, abs=1e-15)


def test_missing_variable_named():
    model = build_model(line_instance([1, 1], 2))
    with pytest.raises(ModelError, match=r"x\[2,1\]"):
        evaluate_objective(model, {a: 0.0 for a in model.arcs if a != (2, 1)})


def test_chain_extraction():
    model = build_model(line_instance([1, 1], 2))
    x = {a: 0.0 for a in model.arcs}
    x.update({(0, 1): 1, (1, 2): 1, (2, 3): 1})
    routes = assignment_to_routes(model, x)
    assert routes.paths == ((0, 1, 2, 3),)
    assert routes.loads == (2,)


def test_two_chains():
    model = build_model(line_instance([1, 1, 1], 3))
    x = {a: 0.0 for a in model.arcs}
    x.update({(0, 1): 1, (1, 4): 1, (0, 3): 1, (3, 2): 1, (2, 4): 1})
    routes = assignment_to_routes(model, x)
    assert routes.paths == ((0, 1, 4), (0, 3, 2, 4))


def test_double_visit_named():
    model = build_model(line_instance([1, 1], 2))
    x = {a: 0.0 for a in model.arcs}
    x.update({(0, 1): 1, (0, 2): 1, (2, 1): 1, (1, 3): 1})
    with pytest.raises(RouteExtractionError, match="node 1"):
        assignment_to_routes(model, x)


def test_fractional_and_subtour():
    model = build_model(line_instance([1, 1, 1], 3))
    x = {a: 0.0 for a in model.arcs}
    x[(0, 1)] = 0.5
    with pytest.raises(RouteExtractionError, match="not integral"):
        assignment_to_routes(model, x)
    x = {a: 0.0 for a in model.arcs}
    x.update({(0, 1): 1, (1, 4): 1, (2, 3): 1, (3, 2): 1})
    with pytest.raises(SubtourError):
        assignment_to_routes(model, x)


def test_feasibility_messages():
    inst = line_instance([1, 1, 1, 1, 1, 1], 2)
    end = inst.end
    good = Routes.from_paths(inst, [[0, 1, 2, end], [0, 3, 4, end], [0, 5, 6, end]])
    assert check_feasibility(inst, good) == []
    heavy = Routes.from_paths(inst, [[0, 1, 2, 3, end], [0, 4, end], [0, 5, 6, end]])
    assert any(p.startswith("capacity:") for p in check_feasibility(inst, heavy))
    missing = Routes.from_paths(inst, [[0, 1, 2, end], [0, 3, 4, end], [0, 5, end]])
    problems = check_feasibility(inst, missing)
    assert problems == ["visit-once: customer 6 is not served by any route"]


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 9), capacity=st.integers(3, 10), seed=st.integers(0, 10**6), data=st.data())
def test_routes_assignment_round_trip(n, capacity, seed, data):
    inst = small_instance(n, capacity, seed)
    model = build_model(inst)
    customers = data.draw(st.permutations(list(inst.customers)))
    paths, cur, load = [], [0], 0
    for v in customers:
        if load + inst.demands[v] > capacity:
            paths.append(cur + [inst.end])
            cur, load = [0], 0
        cur.append(v)
        load += inst.demands[v]
    paths.append(cur + [inst.end])
    routes = Routes.from_paths(inst, paths)
    assert check_feasibility(inst, routes) == []
    vec = routes_to_assignment(model, routes)
    assert np.all(lp_residuals(model, vec) <= 1e-9)
    assert evaluate_objective(model, vec) == pytest.approx(route_cost(inst, routes), abs=1e-15)
    back = assignment_to_routes(model, vec)
    assert sorted(back.paths) == sorted(routes.paths)


def integral_points(model):
    """Every 0/1 arc vector satisfying the degree and flow rows."""
    inst = model.instance
    cust = list(inst.customers)
    end = inst.end
    for succ in itertools.product(*[[j for j in cust + [end] if j != i] for i in cust]):
        x = np.zeros(model.n_arcs)
        indeg = {j: 0 for j in cust}
        for i, j in zip(cust, succ):
            x[model.arc_index[(i, j)]] = 1
            if j != end:
                indeg[j] += 1
        if any(v > 1 for v in indeg.values()):
            continue
        for j in cust:
            x[model.arc_index[(0, j)]] = 1 - indeg[j]
        yield x


@pytest.mark.parametrize("demands,capacity", [([1, 1, 1], 2), ([2, 1, 1], 3), ([1, 2, 1, 1], 3), ([1, 1, 1, 1], 4)])
def test_mtz_excludes_exactly_the_bad_points(demands, capacity):
    inst = line_instance(demands, capacity)
    model = build_model(inst)
    checked = 0
    for x in integral_points(model):
        fix = {k: (v, v) for k, v in enumerate(x)}
        lp = solve_lp(relax(model, fix))
        try:
            routes = assignment_to_routes(model, x)
            good = check_feasibility(inst, routes) == []
        except SubtourError:
            good = False
        assert lp.status == (OPTIMAL if good else INFEASIBLE), x
        checked += 1
    assert checked > 10
