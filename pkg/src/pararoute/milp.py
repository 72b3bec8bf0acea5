"""Arc-flow MILP with load-based (MTZ) subtour elimination.

Variables are laid out in one flat vector: binary arc variables ``x[i,j]``
first, then continuous load variables ``y[i]`` for the start depot and every
customer. Rows are kept as sparse coefficient tuples tagged by the constraint
family they belong to (``degree``, ``flow``, ``mtz``, ``fleet``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .instance import Instance, validate_instance

INT_TOL = 1e-6
FEAS_TOL = 1e-7


class ModelError(ValueError):
    pass


class ModelInfeasibleError(ModelError):
    """The instance cannot have a feasible solution (e.g. a demand above capacity)."""


class RouteExtractionError(ModelError):
    pass


class SubtourError(RouteExtractionError):
    """Arcs set to one contain a cycle that never returns to the end depot."""


@dataclass(frozen=True)
class Row:
    coeffs: tuple[tuple[int, float], ...]
    sense: str  # "<=", "=", ">="
    rhs: float
    tag: str
    label: str


@dataclass(frozen=True, eq=False)
class MilpModel:
    instance: Instance
    arcs: tuple[tuple[int, int], ...]
    load_nodes: tuple[int, ...]
    lower: np.ndarray
    upper: np.ndarray
    objective: np.ndarray
    rows: tuple[Row, ...]
    min_vehicles: int | None = None
    max_vehicles: int | None = None

    @cached_property
    def arc_index(self) -> dict[tuple[int, int], int]:
        return {a: k for k, a in enumerate(self.arcs)}

    @cached_property
    def load_index(self) -> dict[int, int]:
        base = len(self.arcs)
        return {i: base + k for k, i in enumerate(self.load_nodes)}

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    @property
    def n_vars(self) -> int:
        return len(self.arcs) + len(self.load_nodes)

    @cached_property
    def var_names(self) -> list[str]:
        return [f"x[{i},{j}]" for i, j in self.arcs] + [f"y[{i}]" for i in self.load_nodes]

    def rows_tagged(self, tag: str) -> list[Row]:
        return [r for r in self.rows if r.tag == tag]

    @cached_property
    def dense(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Constraint matrix, senses and right-hand sides as dense arrays."""
        A = np.zeros((len(self.rows), self.n_vars))
        for r, row in enumerate(self.rows):
            for k, v in row.coeffs:
                A[r, k] = v
        senses = np.array([row.sense for row in self.rows])
        rhs = np.array([row.rhs for row in self.rows], dtype=float)
        for arr in (A, senses, rhs):
            arr.setflags(write=False)
        return A, senses, rhs


@dataclass(frozen=True)
class Routes:
    """Depot-to-depot node sequences, one per vehicle, with their loads."""

    paths: tuple[tuple[int, ...], ...]
    loads: tuple[int, ...]

    @classmethod
    def from_paths(cls, instance: Instance, paths: Sequence[Sequence[int]]) -> "Routes":
        paths = tuple(tuple(int(v) for v in p) for p in paths)
        q = instance.demands
        n = instance.n_nodes
        loads = tuple(int(sum(q[v] for v in p if 0 <= v < n)) for p in paths)
        return cls(paths, loads)

    def __len__(self) -> int:
        return len(self.paths)

    def customers(self) -> list[int]:
        return [v for p in self.paths for v in p[1:-1]]


def admissible_arcs(instance: Instance) -> list[tuple[int, int]]:
    """Ordered pairs kept in the model: nothing enters the start depot, nothing
    leaves the end depot, and the empty trip start -> end is excluded."""
    cust = list(instance.customers)
    end = instance.end
    arcs = [(0, j) for j in cust]
    arcs += [(i, j) for i in cust for j in cust if i != j]
    arcs += [(i, end) for i in cust]
    return sorted(arcs)


def expected_counts(n_customers: int) -> dict[str, int]:
    m = n_customers
    return {"arcs": m * (m + 1), "loads": m + 1, "degree": m, "flow": m, "mtz": m * m}


def build_model(
    instance: Instance,
    min_vehicles: int | None = None,
    max_vehicles: int | None = None,
) -> MilpModel:
    for i in instance.customers:
        if instance.demands[i] > instance.capacity:
            raise ModelInfeasibleError(
                f"customer {i} demand {instance.demands[i]} exceeds capacity {instance.capacity}"
            )
    problems = validate_instance(instance)
    if problems:
        raise ModelError("invalid instance: " + "; ".join(problems))

    arcs = admissible_arcs(instance)
    arc_index = {a: k for k, a in enumerate(arcs)}
    cust = list(instance.customers)
    end = instance.end
    load_nodes = [0] + cust
    load_index = {i: len(arcs) + k for k, i in enumerate(load_nodes)}
    n_vars = len(arcs) + len(load_nodes)
    Q = float(instance.capacity)
    q = instance.demands.astype(float)

    lower = np.zeros(n_vars)
    upper = np.ones(n_vars)
    for i in load_nodes:
        lower[load_index[i]] = q[i]
        upper[load_index[i]] = Q
    objective = np.zeros(n_vars)
    for k, (i, j) in enumerate(arcs):
        objective[k] = instance.costs[i, j]

    rows: list[Row] = []
    for i in cust:
        coeffs = tuple((arc_index[(i, j)], 1.0) for j in cust + [end] if j != i)
        rows.append(Row(coeffs, "=", 1.0, "degree", f"visit-once[{i}]"))
    for h in cust:
        inflow = [(arc_index[(i, h)], 1.0) for i in [0] + cust if i != h]
        outflow = [(arc_index[(h, j)], -1.0) for j in cust + [end] if j != h]
        rows.append(Row(tuple(inflow + outflow), "=", 0.0, "flow", f"flow[{h}]"))
    # y_j >= y_i + q_j x_ij - Q (1 - x_ij)  <=>  y_j - y_i - (q_j + Q) x_ij >= -Q
    for i, j in arcs:
        if j == end:
            continue
        coeffs = ((load_index[j], 1.0), (load_index[i], -1.0), (arc_index[(i, j)], -(q[j] + Q)))
        rows.append(Row(coeffs, ">=", -Q, "mtz", f"load[{i},{j}]"))
    depot_out = tuple((arc_index[(0, j)], 1.0) for j in cust)
    if min_vehicles is not None:
        rows.append(Row(depot_out, ">=", float(min_vehicles), "fleet", "min-vehicles"))
    if max_vehicles is not None:
        rows.append(Row(depot_out, "<=", float(max_vehicles), "fleet", "max-vehicles"))

    for arr in (lower, upper, objective):
        arr.setflags(write=False)
    return MilpModel(
        instance, tuple(arcs), tuple(load_nodes), lower, upper, objective, tuple(rows),
        min_vehicles, max_vehicles,
    )


def _as_vector(model: MilpModel, assignment, need_loads: bool = False) -> np.ndarray:
    if isinstance(assignment, np.ndarray):
        if assignment.shape[0] < (model.n_vars if need_loads else model.n_arcs):
            raise ModelError(f"assignment vector too short: {assignment.shape[0]}")
        return assignment.astype(float)
    vec = np.zeros(model.n_vars)
    for k, (i, j) in enumerate(model.arcs):
        key = (i, j)
        if key in assignment:
            vec[k] = assignment[key]
        elif f"x[{i},{j}]" in assignment:
            vec[k] = assignment[f"x[{i},{j}]"]
        else:
            raise ModelError(f"assignment is missing variable x[{i},{j}]")
    for i, k in model.load_index.items():
        if i in assignment:
            vec[k] = assignment[i]
        elif f"y[{i}]" in assignment:
            vec[k] = assignment[f"y[{i}]"]
        elif need_loads:
            raise ModelError(f"assignment is missing variable y[{i}]")
    return vec


def evaluate_objective(model: MilpModel, assignment) -> float:
    """Total travel cost of an assignment; fractional values are fine.

    ``assignment`` is either a flat vector in model order or a mapping from arc
    ``(i, j)`` (or the name ``"x[i,j]"``) to its value.
    """
    vec = _as_vector(model, assignment)
    return float(model.objective[: model.n_arcs] @ vec[: model.n_arcs])


def assignment_to_routes(model: MilpModel, assignment) -> Routes:
    vec = _as_vector(model, assignment)
    x = vec[: model.n_arcs]
    frac = np.abs(x - np.round(x))
    if np.any(frac > INT_TOL):
        k = int(np.argmax(frac))
        raise RouteExtractionError(f"assignment is not integral: {model.var_names[k]} = {x[k]}")
    inst = model.instance
    end = inst.end
    succ: dict[int, list[int]] = {}
    indeg: dict[int, int] = {}
    for k, (i, j) in enumerate(model.arcs):
        if x[k] > 0.5:
            succ.setdefault(i, []).append(j)
            indeg[j] = indeg.get(j, 0) + 1
    for h in inst.customers:
        if indeg.get(h, 0) > 1:
            raise RouteExtractionError(f"node {h} visited {indeg[h]} times (entered more than once)")
        if len(succ.get(h, [])) > 1:
            raise RouteExtractionError(f"node {h} visited more than once (left {len(succ[h])} times)")
        if len(succ.get(h, [])) == 0:
            raise RouteExtractionError(f"node {h} is never left")
        if indeg.get(h, 0) == 0:
            raise RouteExtractionError(f"node {h} is never entered")

    paths = []
    seen: set[int] = set()
    for first in sorted(succ.get(0, [])):
        path = [0]
        v = first
        while v != end:
            if v in seen:
                raise SubtourError(f"node {v} reached twice while following route from depot")
            seen.add(v)
            path.append(v)
            v = succ[v][0]
        path.append(end)
        paths.append(path)
    missing = [h for h in inst.customers if h not in seen]
    if missing:
        raise SubtourError(f"customers {missing} lie on a cycle that never returns to the depot")
    return Routes.from_paths(inst, paths)


def routes_to_assignment(model: MilpModel, routes: Routes) -> np.ndarray:
    """Flat variable vector for a route plan; loads accumulate along each route."""
    vec = np.zeros(model.n_vars)
    q = model.instance.demands
    for path in routes.paths:
        load = 0
        for a, b in zip(path, path[1:]):
            vec[model.arc_index[(a, b)]] = 1.0
            if b != model.instance.end:
                load += q[b]
                vec[model.load_index[b]] = load
    return vec


def route_cost(instance: Instance, routes: Routes) -> float:
    c = instance.costs
    return float(sum(c[a, b] for p in routes.paths for a, b in zip(p, p[1:])))


def check_feasibility(instance: Instance, routes: Routes) -> list[str]:
    """Violations of visit-once, flow continuity and vehicle capacity; empty when feasible."""
    out: list[str] = []
    end = instance.end
    n = instance.n_nodes
    visits: dict[int, int] = {}
    for r, path in enumerate(routes.paths):
        if len(path) < 3:
            out.append(f"flow: route {r} {list(path)} serves no customer")
        if not path or path[0] != 0:
            out.append(f"flow: route {r} does not start at depot 0")
        if not path or path[-1] != end:
            out.append(f"flow: route {r} does not end at depot {end}")
        for v in path[1:-1]:
            if not 1 <= v < end:
                out.append(f"flow: route {r} passes through non-customer node {v}")
                continue
            visits[v] = visits.get(v, 0) + 1
        load = int(sum(instance.demands[v] for v in path if 0 <= v < n))
        if load > instance.capacity:
            out.append(f"capacity: route {r} carries {load} > Q = {instance.capacity}")
        if r < len(routes.loads) and routes.loads[r] != load:
            out.append(f"capacity: route {r} reports load {routes.loads[r]} but serves {load}")
    for h in instance.customers:
        k = visits.get(h, 0)
        if k == 0:
            out.append(f"visit-once: customer {h} is not served by any route")
        elif k > 1:
            out.append(f"visit-once: customer {h} is visited {k} times")
    return out


def lp_residuals(model: MilpModel, vec: np.ndarray) -> np.ndarray:
    """Signed violation of every row (positive = violated) at point ``vec``."""
    A, senses, rhs = model.dense
    act = A @ vec
    viol = np.where(senses == "<=", act - rhs, np.where(senses == ">=", rhs - act, np.abs(act - rhs)))
    return viol
