"""Scenario grid over request counts and vehicle capacities, plus trend tables."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .branch_bound import SearchParams, solve
from .instance import DEFAULT_JITTER, GREENSBORO, GeneratorConfig, Instance, generate_instance
from .milp import Routes, build_model

log = logging.getLogger(__name__)

CSV_HEADER = ["n", "Q", "nodes_explored", "simplex_iterations", "run_time_s", "objective_cost", "gap_percent"]
DEFAULT_REQUESTS = (10, 15, 20, 30, 40)
DEFAULT_CAPACITIES = (10, 15, 20)


@dataclass(frozen=True)
class GridConfig:
    requests: tuple[int, ...] = DEFAULT_REQUESTS
    capacities: tuple[int, ...] = DEFAULT_CAPACITIES
    seed_base: int = 0
    time_limit: float = 30.0
    node_limit: int | None = None
    center_lat: float = GREENSBORO[0]
    center_lon: float = GREENSBORO[1]
    jitter: float = DEFAULT_JITTER
    demand_mode: str = "grouped"
    max_group: int = 4

    def __post_init__(self):
        if not self.requests or not self.capacities:
            raise ValueError("request and capacity lists must be non-empty")
        if any(v <= 0 for v in (*self.requests, *self.capacities)):
            raise ValueError("requests and capacities must be positive")
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")

    def cells(self) -> list[tuple[int, int]]:
        """(n, Q) pairs: capacities outer, requests inner."""
        return [(n, Q) for Q in self.capacities for n in self.requests]


@dataclass
class GridRow:
    n: int
    Q: int
    seed: int
    nodes_explored: int | None = None
    simplex_iterations: int | None = None
    run_time_s: float | None = None
    objective_cost: float | None = None
    gap_percent: float | None = None
    status: str = ""
    routes: int | None = None
    error: str | None = None
    instance: Instance | None = field(default=None, repr=False)
    solution: Routes | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def csv_values(self) -> list:
        if not self.ok:
            return [self.n, self.Q, "", "", "", f"ERROR: {self.error}", ""]
        return [self.n, self.Q, self.nodes_explored, self.simplex_iterations,
                f"{self.run_time_s:.2f}", repr(self.objective_cost), f"{self.gap_percent:.4f}"]

    def to_dict(self) -> dict:
        return {
            "n": self.n, "Q": self.Q, "seed": self.seed,
            "nodes_explored": self.nodes_explored, "simplex_iterations": self.simplex_iterations,
            "run_time_s": self.run_time_s, "objective_cost": self.objective_cost,
            "gap_percent": self.gap_percent, "status": self.status, "routes": self.routes,
            "error": self.error,
        }


def cell_seed(seed_base: int, n: int, capacity: int) -> int:
    """Stable 32-bit seed for one grid cell."""
    digest = hashlib.sha256(f"{seed_base}:{n}:{capacity}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def run_cell(config: GridConfig, n: int, capacity: int) -> GridRow:
    seed = cell_seed(config.seed_base, n, capacity)
    row = GridRow(n, capacity, seed)
    try:
        gen = GeneratorConfig(n, capacity, config.center_lat, config.center_lon, config.jitter,
                              config.demand_mode, config.max_group)
        inst = generate_instance(gen, seed)
        routes, stats = solve(build_model(inst), SearchParams(config.time_limit, config.node_limit))
    except Exception as exc:  # recorded in the row; the grid carries on
        log.warning("cell n=%d Q=%d failed: %s", n, capacity, exc)
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    row.nodes_explored = stats.nodes_explored
    row.simplex_iterations = stats.simplex_iterations
    row.run_time_s = stats.run_time
    row.objective_cost = stats.objective
    row.gap_percent = stats.gap_percent
    row.status = stats.status
    row.routes = len(routes)
    row.instance = inst
    row.solution = routes
    return row


def run_scenario_grid(config: GridConfig, progress: Callable[[GridRow], None] | None = None) -> list[GridRow]:
    rows = []
    for n, capacity in config.cells():
        row = run_cell(config, n, capacity)
        if progress:
            progress(row)
        rows.append(row)
    return rows


def write_results_csv(rows: Sequence[GridRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow(row.csv_values())


def read_results_csv(path: str | Path) -> list[GridRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for rec in reader:
            row = GridRow(int(rec["n"]), int(rec["Q"]), 0)
            if rec["objective_cost"].startswith("ERROR"):
                row.error = rec["objective_cost"][len("ERROR: "):]
            else:
                row.nodes_explored = int(rec["nodes_explored"])
                row.simplex_iterations = int(rec["simplex_iterations"])
                row.run_time_s = float(rec["run_time_s"])
                row.objective_cost = float(rec["objective_cost"])
                row.gap_percent = float(rec["gap_percent"])
            rows.append(row)
    return rows


def emit_trends(rows: Sequence[GridRow], outdir: str | Path) -> list[Path]:
    """One CSV of cost vs capacity per request count, one of cost vs requests per capacity."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    requests = list(dict.fromkeys(r.n for r in rows))
    capacities = list(dict.fromkeys(r.Q for r in rows))

    def fmt(v):
        return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(v)

    written = []
    for n in requests:
        path = outdir / f"cost_vs_capacity_n{n}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["Q", "objective_cost", "gap_percent"])
            for r in rows:
                if r.n == n:
                    w.writerow([r.Q, fmt(r.objective_cost), fmt(r.gap_percent)])
        written.append(path)
    for Q in capacities:
        path = outdir / f"cost_vs_requests_Q{Q}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "objective_cost", "gap_percent"])
            for r in rows:
                if r.Q == Q:
                    w.writerow([r.n, fmt(r.objective_cost), fmt(r.gap_percent)])
        written.append(path)
    return written
