"""LP-based branch-and-bound over the arc variables.

Node selection is best-bound with plunging: after branching, the search dives
into the ``x = 1`` child on the live simplex tableau (dual simplex warm start)
and only returns to the best-bound queue when the dive ends. Queued nodes carry
the parent's optimal basis, which is refactored when the node is resumed.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .heuristics import greedy_routes, improve_routes, nearest_neighbor_routes
from .milp import (
    INT_TOL,
    MilpModel,
    Routes,
    assignment_to_routes,
    check_feasibility,
    route_cost,
)
from .simplex import INFEASIBLE, OPTIMAL, SimplexWorkspace, relax

log = logging.getLogger(__name__)

GAP_ZERO_TOL = 1e-9
PRUNE_TOL = 1e-11
HEURISTIC_EVERY = 10

STATUS_OPTIMAL = "optimal"
STATUS_TIME_LIMIT = "time-limit"
STATUS_NODE_LIMIT = "node-limit"


class SolveError(RuntimeError):
    pass


class InfeasibleModelError(SolveError):
    pass


class NoIncumbentError(SolveError):
    def __init__(self, message: str, best_bound: float):
        super().__init__(message)
        self.best_bound = best_bound


@dataclass(frozen=True)
class SearchParams:
    time_limit: float = 30.0
    node_limit: int | None = None
    gap_target: float = 0.0
    branching: str = "most-fractional"
    node_selection: str = "best-bound-plunge"
    seed: int | None = None
    root_heuristic: bool = True
    warm_start: Routes | None = None

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ValueError(f"time_limit must be > 0, got {self.time_limit}")
        if self.branching != "most-fractional":
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if self.node_selection not in ("best-bound-plunge", "best-bound"):
            raise ValueError(f"unknown node selection {self.node_selection!r}")


@dataclass
class SolveStats:
    nodes_explored: int
    simplex_iterations: int
    run_time: float
    objective: float
    best_bound: float
    gap_percent: float
    status: str = STATUS_OPTIMAL
    root_bound: float = float("nan")
    bound_trace: list[float] = field(default_factory=list, repr=False)
    incumbent_trace: list[float] = field(default_factory=list, repr=False)

    def table_row(self, n: int, capacity: int) -> list:
        """Values in the column order n, Q, nodes, iterations, run time, objective, gap."""
        return [n, capacity, self.nodes_explored, self.simplex_iterations,
                self.run_time, self.objective, self.gap_percent]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("bound_trace")
        d.pop("incumbent_trace")
        return d


def compute_gap(incumbent: float, best_bound: float) -> float:
    """Relative optimality gap in percent, measured against the incumbent."""
    diff = incumbent - best_bound
    if diff <= GAP_ZERO_TOL:
        return 0.0
    return 100.0 * diff / max(abs(incumbent), 1e-12)


def branch_select(values, arcs=None):
    """Pick the arc whose LP value has fractional part closest to 0.5.

    ``values`` is either a mapping from arc to value (the arc is returned) or
    a vector in model order (its position is returned). Ties go to the
    lexicographically smallest arc.
    """
    if isinstance(values, Mapping):
        keys = sorted(values)
        vals = np.array([values[k] for k in keys], dtype=float)
    else:
        vals = np.asarray(values, dtype=float)
        keys = list(arcs) if arcs is not None else list(range(len(vals)))
    frac = np.abs(vals - np.round(vals))
    fractional = frac > INT_TOL
    if not fractional.any():
        raise ValueError("no fractional arc variable to branch on")
    dist = np.where(fractional, np.abs(vals - np.floor(vals) - 0.5), np.inf)
    tied = np.nonzero(dist <= dist.min() + 1e-12)[0]
    pos = int(min(tied, key=lambda i: keys[i]))
    return keys[pos] if isinstance(values, Mapping) else pos


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lower: np.ndarray = field(compare=False)
    upper: np.ndarray = field(compare=False)
    basis: object = field(compare=False)
    depth: int = field(compare=False, default=0)


def _fleet_ok(model: MilpModel, routes: Routes) -> bool:
    k = len(routes)
    if model.min_vehicles is not None and k < model.min_vehicles:
        return False
    if model.max_vehicles is not None and k > model.max_vehicles:
        return False
    return True


def _merged_scores(model: MilpModel, x: np.ndarray) -> np.ndarray:
    inst = model.instance
    size = inst.n_nodes - 1
    s = np.zeros((size, size))
    end = inst.end
    for k, (i, j) in enumerate(model.arcs):
        a, b = i, (0 if j == end else j)
        s[a, b] += x[k]
        s[b, a] += x[k]
    return s


def solve(model: MilpModel, params: SearchParams | None = None) -> tuple[Routes, SolveStats]:
    """Branch-and-bound to optimality, the time limit or the node limit.

    Returns the best route plan found and its statistics. Raises
    :class:`InfeasibleModelError` when the relaxation is infeasible and
    :class:`NoIncumbentError` when a limit hits before any solution exists.
    """
    params = params or SearchParams()
    t0 = time.monotonic()
    deadline = t0 + params.time_limit
    inst = model.instance
    n_arcs = model.n_arcs

    inc_routes: Routes | None = None
    inc_cost = np.inf
    inc_trace: list[float] = []
    bound_trace: list[float] = []

    def offer(routes: Routes, source: str) -> None:
        nonlocal inc_routes, inc_cost
        if check_feasibility(inst, routes) or not _fleet_ok(model, routes):
            return
        cost = route_cost(inst, routes)
        if cost < inc_cost - PRUNE_TOL:
            inc_routes, inc_cost = routes, cost
            inc_trace.append(cost)
            log.debug("incumbent %.10g from %s", cost, source)

    if params.warm_start is not None:
        offer(params.warm_start, "warm start")
    if params.root_heuristic:
        nn = nearest_neighbor_routes(inst)
        offer(nn, "nearest neighbour")
        offer(improve_routes(inst, nn), "nearest neighbour + local search")

    problem = relax(model)
    ws = SimplexWorkspace(problem)
    lp = ws.solve(deadline=deadline)
    iterations = lp.iterations
    nodes = 1
    if lp.status == INFEASIBLE:
        raise InfeasibleModelError("LP relaxation of the model is infeasible")

    def finish(status: str, best_bound: float, root_bound: float) -> tuple[Routes, SolveStats]:
        run_time = time.monotonic() - t0
        if inc_routes is None:
            raise NoIncumbentError(f"{status} reached without an incumbent", best_bound)
        best_bound = min(best_bound, inc_cost)
        gap = compute_gap(inc_cost, best_bound)
        if status == STATUS_OPTIMAL:
            gap = 0.0
            best_bound = inc_cost
        stats = SolveStats(nodes, iterations, run_time, inc_cost, best_bound, gap, status,
                           root_bound, bound_trace, inc_trace)
        return inc_routes, stats

    if lp.status != OPTIMAL:
        return finish(STATUS_TIME_LIMIT, 0.0, float("nan"))
    root_bound = lp.objective
    bound_trace.append(root_bound)

    queue: list[_Node] = []
    seq = 0
    lower = problem.lower.copy()
    upper = problem.upper.copy()
    current_bound = root_bound  # bound of the node whose LP is in ``lp``
    depth = 0
    plunge = params.node_selection == "best-bound-plunge"

    def global_bound() -> float:
        b = current_bound if current is not None else np.inf
        if queue:
            b = min(b, queue[0].bound)
        return b

    current: bool | None = True
    status = STATUS_OPTIMAL
    while True:
        # evaluate the node whose LP result is in ``lp``
        if lp.status == OPTIMAL and lp.objective < inc_cost - PRUNE_TOL:
            x = lp.x[:n_arcs]
            frac = np.abs(x - np.round(x))
            if frac.max() <= INT_TOL:
                try:
                    offer(assignment_to_routes(model, np.round(x)), "integral LP")
                except ValueError:
                    log.warning("integral LP point did not decode into routes")
                next_node = None
            else:
                if nodes == 1 or nodes % HEURISTIC_EVERY == 0:
                    offer(improve_routes(inst, greedy_routes(inst, _merged_scores(model, x))), "LP-guided greedy")
                k = branch_select(x, model.arcs)
                snap = ws.snapshot()
                down_lo, down_hi = lower.copy(), upper.copy()
                down_hi[k] = 0.0
                up_lo, up_hi = lower.copy(), upper.copy()
                up_lo[k] = 1.0
                bound = max(lp.objective, current_bound)
                if plunge:
                    heapq.heappush(queue, _Node(bound, seq, down_lo, down_hi, snap, depth + 1))
                    seq += 1
                    next_node = (up_lo, up_hi, None, bound, depth + 1)
                else:
                    for lo_, hi_ in ((up_lo, up_hi), (down_lo, down_hi)):
                        heapq.heappush(queue, _Node(bound, seq, lo_, hi_, snap, depth + 1))
                        seq += 1
                    next_node = None
        else:
            next_node = None

        if next_node is None:
            current = None
            # drop queued nodes that can no longer beat the incumbent
            if queue and queue[0].bound >= inc_cost - PRUNE_TOL:
                queue.clear()
            if not queue:
                status = STATUS_OPTIMAL
                break
            gb = global_bound()
            if compute_gap(inc_cost, gb) <= params.gap_target and params.gap_target > 0:
                status = STATUS_OPTIMAL
                break
            node = heapq.heappop(queue)
            next_node = (node.lower, node.upper, node.basis, node.bound, node.depth)

        lower, upper, basis, current_bound, depth = next_node
        current = True
        bound_trace.append(min(global_bound(), inc_cost))
        if time.monotonic() >= deadline:
            status = STATUS_TIME_LIMIT
            break
        if params.node_limit is not None and nodes >= params.node_limit:
            status = STATUS_NODE_LIMIT
            break
        if basis is None:
            ws.set_bounds(lower, upper)
        else:
            ws.restore(basis, lower, upper)
        lp = ws.reoptimize(deadline=deadline)
        iterations += lp.iterations
        nodes += 1
        if lp.status not in (OPTIMAL, INFEASIBLE):
            status = STATUS_TIME_LIMIT
            break

    if status == STATUS_OPTIMAL:
        return finish(status, inc_cost, root_bound)
    return finish(status, global_bound(), root_bound)
