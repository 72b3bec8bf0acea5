"""Paratransit vehicle routing: MILP model, in-repo simplex and branch-and-bound, oracles and a GCN heuristic."""

__version__ = "0.1.0"

from .branch_bound import SearchParams, SolveStats, solve
from .instance import GeneratorConfig, Instance, generate_instance, read_instance, write_instance
from .milp import Routes, build_model, check_feasibility, route_cost
from .oracle import exact_cvrp, held_karp_tsp

__all__ = [
    "GeneratorConfig",
    "Instance",
    "Routes",
    "SearchParams",
    "SolveStats",
    "build_model",
    "check_feasibility",
    "exact_cvrp",
    "generate_instance",
    "held_karp_tsp",
    "read_instance",
    "route_cost",
    "solve",
    "write_instance",
]
