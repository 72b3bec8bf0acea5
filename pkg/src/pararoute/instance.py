"""Routing instances: a doubled depot, customer pickup nodes and Euclidean costs.

Node indexing follows the MILP: ``0`` is the depot a vehicle leaves from,
``1..m`` are customer nodes and ``m + 1`` is the depot it returns to. Both
depot copies sit on the same coordinate and carry zero demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

GREENSBORO = (36.0726, -79.7920)
DEFAULT_JITTER = 0.004
FILE_VERSION = 1
TRIANGLE_TOL = 1e-12


class InstanceError(ValueError):
    """An instance (or instance file) violates the data invariants."""

    def __init__(self, message: str, violations: Sequence[str] = ()):
        super().__init__(message)
        self.violations = list(violations)


class InstanceParseError(InstanceError):
    """An instance file could not be parsed."""


@dataclass(frozen=True)
class GeneratorConfig:
    request_count: int
    capacity: int
    center_lat: float = GREENSBORO[0]
    center_lon: float = GREENSBORO[1]
    jitter: float = DEFAULT_JITTER
    demand_mode: str = "grouped"
    max_group: int = 4

    def __post_init__(self):
        if self.request_count < 1:
            raise ValueError(f"request_count must be >= 1, got {self.request_count}")
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")
        if not self.jitter > 0:
            raise ValueError(f"jitter must be > 0, got {self.jitter}")
        if self.demand_mode not in ("unit", "grouped"):
            raise ValueError(f"demand_mode must be 'unit' or 'grouped', got {self.demand_mode!r}")
        if self.demand_mode == "grouped":
            if self.max_group < 1:
                raise ValueError(f"max_group must be >= 1, got {self.max_group}")
            if self.max_group > self.capacity:
                raise ValueError(
                    f"max_group ({self.max_group}) exceeds capacity ({self.capacity})"
                )


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable routing instance.

    Attributes:
        coords: ``(m + 2, 2)`` array of (lat, lon) in degrees, depot copies first and last.
        demands: ``(m + 2,)`` integer array of persons to pick up at each node.
        capacity: vehicle seats ``Q``.
        costs: ``(m + 2, m + 2)`` travel cost matrix in degree units.
        seed: generator seed, 0 for hand-built instances.
        center: generation center (lat, lon); the depot location for hand-built ones.
    """

    coords: np.ndarray
    demands: np.ndarray
    capacity: int
    costs: np.ndarray
    seed: int = 0
    center: tuple[float, float] | None = None

    def __post_init__(self):
        for name in ("coords", "demands", "costs"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.center is None:
            object.__setattr__(self, "center", (float(self.coords[0, 0]), float(self.coords[0, 1])))

    @classmethod
    def from_points(
        cls,
        depot: Sequence[float],
        points: Iterable[Sequence[float]],
        demands: Iterable[int],
        capacity: int,
        seed: int = 0,
        center: tuple[float, float] | None = None,
    ) -> "Instance":
        pts = [tuple(map(float, depot))] + [tuple(map(float, p)) for p in points]
        pts.append(pts[0])
        coords = np.array(pts, dtype=float)
        q = np.array([0, *demands, 0], dtype=np.int64)
        if len(q) != len(coords):
            raise InstanceError("points and demands differ in length")
        return cls(coords, q, int(capacity), euclidean_cost_matrix(coords), seed, center)

    @property
    def n_customers(self) -> int:
        return len(self.coords) - 2

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @property
    def start(self) -> int:
        return 0

    @property
    def end(self) -> int:
        return len(self.coords) - 1

    @property
    def customers(self) -> range:
        return range(1, len(self.coords) - 1)

    @property
    def total_demand(self) -> int:
        return int(self.demands.sum())

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.capacity == other.capacity
            and self.seed == other.seed
            and self.center == other.center
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.demands, other.demands)
            and np.array_equal(self.costs, other.costs)
        )

    def __hash__(self):
        return hash((self.capacity, self.seed, self.coords.tobytes(), self.demands.tobytes()))


def euclidean_cost_matrix(coordinates) -> np.ndarray:
    """Pairwise straight-line distances between coordinate pairs."""
    pts = np.asarray(coordinates, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("need at least 2 coordinate pairs")
    diff = pts[:, None, :] - pts[None, :, :]
    costs = np.sqrt(diff[..., 0] ** 2 + diff[..., 1] ** 2)
    np.fill_diagonal(costs, 0.0)
    return costs


def _draw_demands(config: GeneratorConfig, rng: np.random.Generator) -> list[int]:
    if config.demand_mode == "unit":
        return [1] * config.request_count
    demands = []
    remaining = config.request_count
    while remaining > 0:
        q = int(rng.integers(1, config.max_group + 1))
        q = min(q, remaining)
        demands.append(q)
        remaining -= q
    return demands


def generate_instance(config: GeneratorConfig, seed: int) -> Instance:
    """Random instance around ``config`` center; a pure function of ``(config, seed)``.

    The depot sits on the center; customer points are uniform in the square of
    half-width ``config.jitter``.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    rng = np.random.default_rng(seed)
    demands = _draw_demands(config, rng)
    center = (config.center_lat, config.center_lon)
    low = np.array(center) - config.jitter
    high = np.array(center) + config.jitter
    points = rng.uniform(low, high, size=(len(demands), 2))
    return Instance.from_points(center, points, demands, config.capacity, seed=seed, center=center)


def validate_instance(instance: Instance) -> list[str]:
    """Return a description of every broken invariant; empty when the instance is sound."""
    out: list[str] = []
    coords, q, costs = instance.coords, instance.demands, instance.costs
    size = len(coords)
    if coords.ndim != 2 or coords.shape[1] != 2:
        return [f"coords: expected shape (N, 2), got {coords.shape}"]
    if size < 3:
        out.append(f"node count: need at least one customer plus 2 depot copies, got {size} nodes")
    if q.shape != (size,):
        out.append(f"node count: demands has {q.shape} entries for {size} nodes")
        return out
    if costs.shape != (size, size):
        out.append(f"node count: cost matrix shape {costs.shape} for {size} nodes")
        return out
    if instance.capacity < 1:
        out.append(f"capacity: Q must be a positive integer, got {instance.capacity}")

    end = size - 1
    for d in (0, end):
        if q[d] != 0:
            out.append(f"depot demand: q_{d} = {q[d]} but depot demand must be 0")
    if not np.array_equal(coords[0], coords[end]):
        out.append(f"depot coordinates: node 0 {tuple(coords[0])} != node {end} {tuple(coords[end])}")
    for i in range(1, end):
        if not 0 < q[i] <= instance.capacity:
            out.append(f"customer demand: q_{i} = {q[i]} outside (0, Q={instance.capacity}]")

    if not np.all(np.isfinite(costs)):
        out.append("cost matrix: non-finite entries")
        return out
    for i, j in zip(*np.nonzero(costs < 0)):
        out.append(f"cost non-negativity: C_{i}{j} = {costs[i, j]}")
    for i in np.nonzero(np.diag(costs) != 0)[0]:
        out.append(f"cost diagonal: C_{i}{i} = {costs[i, i]} != 0")
    asym = np.abs(costs - costs.T) > TRIANGLE_TOL
    for i, j in zip(*np.nonzero(np.triu(asym))):
        out.append(f"cost symmetry: C_{i}{j} = {costs[i, j]} != C_{j}{i} = {costs[j, i]}")
    if not (np.array_equal(costs[0], costs[end]) and np.array_equal(costs[:, 0], costs[:, end])):
        out.append(f"depot costs: row/column 0 differs from row/column {end}")
    # C_ik <= C_ij + C_jk for all j, checked through the shortest two-hop detour
    detour = (costs[:, :, None] + costs[None, :, :]).min(axis=1)
    bad = costs > detour + TRIANGLE_TOL
    for i, k in zip(*np.nonzero(bad)):
        out.append(f"triangle inequality: C_{i}{k} = {costs[i, k]} exceeds a two-hop path {detour[i, k]}")
    return out


def instance_to_dict(instance: Instance) -> dict:
    nodes = [
        {
            "id": i,
            "lat": float(instance.coords[i, 0]),
            "lon": float(instance.coords[i, 1]),
            "demand": int(instance.demands[i]),
        }
        for i in range(instance.n_nodes - 1)
    ]
    lat, lon = instance.center
    return {
        "version": FILE_VERSION,
        "seed": int(instance.seed),
        "capacity": int(instance.capacity),
        "center": {"lat": float(lat), "lon": float(lon)},
        "nodes": nodes,
    }


def _field(obj: dict, key: str, where: str, kinds: tuple):
    if not isinstance(obj, dict) or key not in obj:
        raise InstanceParseError(f"{where}: missing field {key!r}")
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, kinds):
        raise InstanceParseError(f"{where}: field {key!r} has invalid value {val!r}")
    return val


def instance_from_dict(data: dict, where: str = "instance") -> Instance:
    if not isinstance(data, dict):
        raise InstanceParseError(f"{where}: expected a JSON object")
    version = _field(data, "version", where, (int,))
    if version != FILE_VERSION:
        raise InstanceParseError(f"{where}: unsupported version {version}")
    seed = _field(data, "seed", where, (int,))
    capacity = _field(data, "capacity", where, (int,))
    center = _field(data, "center", where, (dict,))
    center_t = (
        float(_field(center, "lat", f"{where}.center", (int, float))),
        float(_field(center, "lon", f"{where}.center", (int, float))),
    )
    nodes = _field(data, "nodes", where, (list,))
    if len(nodes) < 2:
        raise InstanceParseError(f"{where}.nodes: need the depot and at least one customer")
    coords, demands = [], []
    for k, node in enumerate(nodes):
        loc = f"{where}.nodes[{k}]"
        nid = _field(node, "id", loc, (int,))
        if nid != k:
            raise InstanceParseError(f"{loc}: expected id {k}, got {nid}")
        coords.append((float(_field(node, "lat", loc, (int, float))), float(_field(node, "lon", loc, (int, float)))))
        demands.append(_field(node, "demand", loc, (int,)))
    coords.append(coords[0])
    demands.append(0)
    inst = Instance(
        np.array(coords), np.array(demands, dtype=np.int64), capacity,
        euclidean_cost_matrix(coords), seed, center_t,
    )
    problems = validate_instance(inst)
    if problems:
        raise InstanceError(f"{where}: invalid instance: " + "; ".join(problems), problems)
    return inst


def write_instance(instance: Instance, path: str | Path) -> None:
    problems = validate_instance(instance)
    if problems:
        raise InstanceError("refusing to write invalid instance: " + "; ".join(problems), problems)
    Path(path).write_text(json.dumps(instance_to_dict(instance), indent=2) + "\n")


def read_instance(path: str | Path) -> Instance:
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return instance_from_dict(data, where=str(path))
