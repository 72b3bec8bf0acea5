"""Solution files: objective, routes, loads and an optional statistics block."""

from __future__ import annotations

import json
from pathlib import Path

from .instance import Instance, InstanceParseError
from .milp import Routes, check_feasibility, route_cost

SOLUTION_VERSION = 1


def solution_to_dict(instance: Instance, routes: Routes, stats: dict | None = None) -> dict:
    data = {
        "version": SOLUTION_VERSION,
        "objective": route_cost(instance, routes),
        "routes": [list(p) for p in routes.paths],
        "loads": list(routes.loads),
    }
    if stats is not None:
        data["stats"] = stats
    return data


def write_solution(path: str | Path, instance: Instance, routes: Routes, stats: dict | None = None) -> None:
    Path(path).write_text(json.dumps(solution_to_dict(instance, routes, stats), indent=2) + "\n")


def read_solution(path: str | Path, instance: Instance | None = None) -> tuple[Routes, dict]:
    """Load routes (and the raw document). With ``instance`` given the routes are re-validated."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict) or "routes" not in data:
        raise InstanceParseError(f"{path}: missing field 'routes'")
    paths = data["routes"]
    if not isinstance(paths, list) or not all(isinstance(p, list) for p in paths):
        raise InstanceParseError(f"{path}: field 'routes' must be a list of node-id lists")
    if instance is None:
        loads = data.get("loads", [0] * len(paths))
        return Routes(tuple(tuple(int(v) for v in p) for p in paths), tuple(int(v) for v in loads)), data
    routes = Routes.from_paths(instance, paths)
    problems = check_feasibility(instance, routes)
    if problems:
        raise InstanceParseError(f"{path}: infeasible routes: " + "; ".join(problems))
    return routes, data
