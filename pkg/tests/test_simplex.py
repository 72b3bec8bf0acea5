import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from conftest import small_instance
from pararoute.milp import build_model
from pararoute.oracle import exact_cvrp
from pararoute.simplex import (
    INFEASIBLE,
    ITERATION_LIMIT,
    OPTIMAL,
    LpProblem,
    SimplexWorkspace,
    primal_residuals,
    relax,
    solve_lp,
)


def lp(c, A, senses, b, lower, upper):
    return LpProblem(np.array(c, float), np.array(A, float), np.array(senses), np.array(b, float),
                     np.array(lower, float), np.array(upper, float))


def highs(problem):
    A, b, s = problem.A, problem.b, problem.senses
    ub_rows = [A[i] if s[i] == "<=" else -A[i] for i in range(len(b)) if s[i] != "="]
    ub_rhs = [b[i] if s[i] == "<=" else -b[i] for i in range(len(b)) if s[i] != "="]
    eq = s == "="
    return linprog(problem.c, A_ub=np.array(ub_rows) if ub_rows else None, b_ub=ub_rhs or None,
                   A_eq=A[eq] if eq.any() else None, b_eq=b[eq] if eq.any() else None,
                   bounds=list(zip(problem.lower, problem.upper)), method="highs")


def test_single_variable_lower_row():
    sol = solve_lp(lp([1.0], [[1.0]], [">="], [3.0], [0.0], [10.0]))
    assert sol.status == OPTIMAL
    assert sol.x[0] == pytest.approx(3.0, abs=1e-12)
    assert sol.objective == pytest.approx(3.0, abs=1e-12)


def test_zero_row_is_infeasible():
    sol = solve_lp(lp([1.0], [[0.0]], [">="], [1.0], [0.0], [10.0]))
    assert sol.status == INFEASIBLE


def test_crossed_bounds_marked_before_solving():
    problem = lp([1.0], [[1.0]], ["<="], [5.0], [2.0], [1.0])
    assert problem.infeasible
    sol = solve_lp(problem)
    assert sol.status == INFEASIBLE and sol.iterations == 0


def test_infinite_bounds_rejected():
    with pytest.raises(ValueError, match="finite"):
        lp([1.0], [[1.0]], ["<="], [5.0], [0.0], [np.inf])


def test_relax_fixings():
    inst = small_instance(4, 5, 1, mode="unit")
    model = build_model(inst)
    free = relax(model)
    assert np.all(free.lower[: model.n_arcs] == 0) and np.all(free.upper[: model.n_arcs] == 1)
    fixed = relax(model, {(0, 1): (1.0, 1.0)})
    k = model.arc_index[(0, 1)]
    assert (fixed.lower[k], fixed.upper[k]) == (1.0, 1.0)
    assert not fixed.infeasible
    assert relax(model, {(0, 1): (1.0, 0.0)}).infeasible


def test_iteration_limit_status():
    inst = small_instance(8, 4, 3)
    sol = solve_lp(relax(build_model(inst)), max_iterations=3)
    assert sol.status == ITERATION_LIMIT


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(1, 6), n=st.integers(1, 8))
def test_random_lps_match_highs(seed, m, n):
    rng = np.random.default_rng(seed)
    A = rng.integers(-3, 4, size=(m, n)).astype(float)
    senses = rng.choice(["<=", ">=", "="], size=m)
    lower = rng.integers(-2, 1, size=n).astype(float)
    upper = lower + rng.integers(0, 4, size=n)
    x0 = lower + rng.random(n) * (upper - lower)
    b = A @ x0 + np.where(senses == "<=", 1.0, np.where(senses == ">=", -1.0, 0.0)) * rng.random(m)
    if rng.random() < 0.2:
        b = b + np.where(senses == "<=", -50.0, 50.0)  # usually infeasible
    problem = LpProblem(rng.normal(size=n), A, senses, b, lower, upper)
    ours = solve_lp(problem)
    ref = highs(problem)
    if ref.status == 2:
        assert ours.status == INFEASIBLE
    else:
        assert ours.status == OPTIMAL
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7)
        assert np.all(primal_residuals(problem, ours.x) <= 1e-7)


@pytest.mark.parametrize("seed", range(6))
def test_routing_relaxation_matches_highs(seed):
    inst = small_instance(9, 5, seed)
    problem = relax(build_model(inst))
    ours = solve_lp(problem)
    ref = highs(problem)
    assert ours.status == OPTIMAL
    assert ours.objective == pytest.approx(ref.fun, abs=1e-10)
    assert np.all(primal_residuals(problem, ours.x) <= 1e-7)


@pytest.mark.parametrize("seed", range(5))
def test_relaxation_below_integer_optimum(seed):
    inst = small_instance(6, 4, seed)
    sol = solve_lp(relax(build_model(inst)))
    assert sol.objective <= exact_cvrp(inst).objective + 1e-12


def test_deterministic():
    problem = relax(build_model(small_instance(10, 6, 4)))
    a, b = solve_lp(problem), solve_lp(problem)
    assert a.iterations == b.iterations
    assert a.objective == b.objective
    assert np.array_equal(a.x, b.x)


@pytest.mark.parametrize("seed", range(8))
def test_warm_start_matches_cold_solve(seed):
    rng = np.random.default_rng(seed)
    model = build_model(small_instance(8, 5, seed))
    problem = relax(model)
    ws = SimplexWorkspace(problem)
    root = ws.solve()
    snap = ws.snapshot()
    for _ in range(4):
        k = int(rng.integers(model.n_arcs))
        v = float(rng.integers(2))
        lo, hi = problem.lower.copy(), problem.upper.copy()
        lo[k] = hi[k] = v
        fixed = LpProblem(problem.c, problem.A, problem.senses, problem.b, lo, hi)
        cold = solve_lp(fixed)
        ws.restore(snap, lo, hi)
        warm = ws.reoptimize()
        assert warm.status == cold.status
        if cold.status == OPTIMAL:
            assert warm.objective == pytest.approx(cold.objective, abs=1e-10)
            assert warm.objective >= root.objective - 1e-12
            assert np.all(primal_residuals(fixed, warm.x) <= 1e-7)
