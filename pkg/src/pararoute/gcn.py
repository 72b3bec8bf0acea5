"""Graph convolutional edge-heatmap model, written directly in numpy.

Node embeddings come from stacked propagation layers ``relu(A_hat @ H @ W)``
(the last layer stays linear). An edge head scores every node pair from the
two embeddings and their distance, and the symmetrised score goes through a
logistic to give the probability that the edge lies on an optimal route.

The graph has one node for the depot (both MILP copies merged) followed by
the customers in instance order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .heuristics import greedy_routes, merged_costs
from .instance import Instance
from .milp import Routes, check_feasibility, route_cost

log = logging.getLogger(__name__)

PROB_CLIP = 1e-7
CHECKPOINT_VERSION = 1


class GcnError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class GcnConfig:
    in_dim: int = 4
    hidden: int = 32
    layers: int = 3
    knn: int | None = None  # sparsify the input graph to k nearest neighbours


@dataclass
class GcnModel:
    config: GcnConfig
    params: dict[str, np.ndarray]

    @property
    def layer_names(self) -> list[str]:
        return [f"W{k}" for k in range(self.config.layers)]

    def copy(self) -> "GcnModel":
        return GcnModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in sorted(self.params)])


def init_model(config: GcnConfig | None = None, seed: int = 0) -> GcnModel:
    """Glorot-uniform weights, zero output bias."""
    config = config or GcnConfig()
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out, shape):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=shape)

    h = config.hidden
    params = {}
    dims = [config.in_dim] + [h] * config.layers
    for k in range(config.layers):
        params[f"W{k}"] = glorot(dims[k], dims[k + 1], (dims[k], dims[k + 1]))
    # the pair scorer acts on concat(h_i, h_j, c_ij); its weight is stored split
    w_edge = glorot(2 * h + 1, h, (2 * h + 1, h))
    params["Wa"] = w_edge[:h]
    params["Wb"] = w_edge[h : 2 * h]
    params["wc"] = w_edge[2 * h]
    params["v"] = glorot(h, 1, (h,))
    params["b"] = np.zeros(())
    return GcnModel(config, params)


def normalized_adjacency(A: np.ndarray, n_nodes: int | None = None) -> np.ndarray:
    """Symmetric degree normalisation of ``A`` with self loops added."""
    A = np.asarray(A, dtype=float)
    if n_nodes is not None and A.shape != (n_nodes, n_nodes):
        raise GcnError(f"adjacency shape {A.shape} does not match {n_nodes} nodes")
    if not np.array_equal(A, A.T):
        raise GcnError("adjacency must be symmetric")
    if np.any(np.diag(A) != 0):
        raise GcnError("adjacency must have a zero diagonal")
    At = A + np.eye(len(A))
    d = At.sum(axis=1)
    # one rounding per entry: sqrt(d_i d_j) is exact whenever d_i d_j is a perfect square
    return At / np.sqrt(np.outer(d, d))


def node_features(instance: Instance) -> np.ndarray:
    """Rows ``(x, y, demand / Q, is_depot)`` with min-max scaled coordinates."""
    coords = np.asarray(instance.coords[:-1], dtype=float)
    lo = coords.min(axis=0)
    span = coords.max(axis=0) - lo
    scaled = np.where(span > 0, (coords - lo) / np.where(span > 0, span, 1.0), 0.0)
    q = instance.demands[:-1] / instance.capacity
    depot = np.zeros(len(coords))
    depot[0] = 1.0
    return np.column_stack([scaled, q, depot])


def feature_distances(X: np.ndarray) -> np.ndarray:
    diff = X[:, None, :2] - X[None, :, :2]
    return np.sqrt((diff**2).sum(-1))


def input_graph(n_nodes: int, X: np.ndarray | None = None, knn: int | None = None) -> np.ndarray:
    """Complete graph, or the symmetrised k-nearest-neighbour graph when ``knn`` is set."""
    A = np.ones((n_nodes, n_nodes)) - np.eye(n_nodes)
    if knn is None or knn >= n_nodes - 1:
        return A
    dist = feature_distances(X)
    np.fill_diagonal(dist, np.inf)
    A = np.zeros((n_nodes, n_nodes))
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :knn]
    for i, row in enumerate(nearest):
        A[i, row] = 1.0
    return np.maximum(A, A.T)


@dataclass
class _Cache:
    X: np.ndarray
    A_hat: np.ndarray
    C: np.ndarray
    hs: list  # inputs to each layer
    pre: list  # pre-activations of each layer
    P: np.ndarray  # pair pre-activations (N, N, h)
    Z: np.ndarray
    logits: np.ndarray


def _forward(model: GcnModel, X, A_hat, C) -> tuple[np.ndarray, np.ndarray, _Cache]:
    p = model.params
    K = model.config.layers
    H = np.asarray(X, dtype=float)
    N = H.shape[0]
    if A_hat.shape != (N, N):
        raise GcnError(f"normalized adjacency shape {A_hat.shape} does not match {N} nodes")
    hs, pre = [], []
    for k in range(K):
        W = p[f"W{k}"]
        if H.shape[1] != W.shape[0]:
            raise GcnError(f"layer W{k}: input width {H.shape[1]} but weight expects {W.shape[0]}")
        hs.append(H)
        M = A_hat @ H @ W
        pre.append(M)
        H = np.maximum(M, 0.0) if k < K - 1 else M
    if H.shape[1] != p["Wa"].shape[0]:
        raise GcnError(f"edge head expects width {p['Wa'].shape[0]}, got {H.shape[1]}")
    U = H @ p["Wa"]
    V = H @ p["Wb"]
    P = U[:, None, :] + V[None, :, :] + C[:, :, None] * p["wc"]
    Z = np.maximum(P, 0.0)
    S = Z @ p["v"] + p["b"]
    logits = 0.5 * (S + S.T)
    return H, logits, _Cache(X, A_hat, C, hs, pre, P, Z, logits)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def forward(model: GcnModel, X, A_hat, C=None) -> tuple[np.ndarray, np.ndarray]:
    """Embeddings of the last layer and the edge-probability heatmap.

    ``C`` is the pairwise distance input of the edge head; by default it is the
    distance between the (scaled) coordinates in the first two columns of ``X``.
    """
    X = np.asarray(X, dtype=float)
    if C is None:
        C = feature_distances(X)
    H, logits, _ = _forward(model, X, A_hat, C)
    heat = _sigmoid(logits)
    np.fill_diagonal(heat, 0.0)
    return H, heat


def edge_loss(heatmap, target, pos_weight: float) -> tuple[float, np.ndarray]:
    """Class-weighted binary cross-entropy over the upper triangle.

    Returns the loss and its gradient with respect to the edge logits; the
    gradient is placed on the upper triangle and zero elsewhere.
    """
    heat = np.asarray(heatmap, dtype=float)
    t = np.asarray(target, dtype=float)
    iu = np.triu_indices(len(heat), k=1)
    p = np.clip(heat[iu], PROB_CLIP, 1.0 - PROB_CLIP)
    y = t[iu]
    M = max(len(p), 1)
    loss = -np.sum(pos_weight * y * np.log(p) + (1.0 - y) * np.log(1.0 - p)) / M
    grad = np.zeros_like(heat)
    grad[iu] = (pos_weight * y * (p - 1.0) + (1.0 - y) * p) / M
    return float(loss), grad


def default_pos_weight(target: np.ndarray) -> float:
    iu = np.triu_indices(len(target), k=1)
    pos = float(target[iu].sum())
    neg = len(iu[0]) - pos
    return neg / pos if pos > 0 else 1.0


def loss_and_grad(model: GcnModel, X, A_hat, C, target, pos_weight) -> tuple[float, dict[str, np.ndarray]]:
    p = model.params
    K = model.config.layers
    H, logits, cache = _forward(model, X, A_hat, C)
    heat = _sigmoid(logits)
    np.fill_diagonal(heat, 0.0)
    loss, g_up = edge_loss(heat, target, pos_weight)
    # logits are (S + S^T)/2 and only the upper triangle enters the loss
    gS = 0.5 * (g_up + g_up.T)
    grads: dict[str, np.ndarray] = {}
    grads["b"] = np.array(gS.sum())
    grads["v"] = np.einsum("ij,ijh->h", gS, cache.Z)
    dP = gS[:, :, None] * p["v"] * (cache.P > 0)
    grads["wc"] = np.einsum("ijh,ij->h", dP, cache.C)
    dU = dP.sum(axis=1)
    dV = dP.sum(axis=0)
    grads["Wa"] = H.T @ dU
    grads["Wb"] = H.T @ dV
    dH = dU @ p["Wa"].T + dV @ p["Wb"].T
    for k in reversed(range(K)):
        dM = dH if k == K - 1 else dH * (cache.pre[k] > 0)
        AH = A_hat @ cache.hs[k]
        grads[f"W{k}"] = AH.T @ dM
        dH = A_hat.T @ dM @ p[f"W{k}"].T
    return loss, grads


@dataclass
class Example:
    X: np.ndarray
    A_hat: np.ndarray
    C: np.ndarray
    target: np.ndarray
    pos_weight: float


def make_training_example(instance: Instance, optimal: Routes, knn: int | None = None):
    """Features, input adjacency and the 0/1 edge target of an optimal plan."""
    problems = check_feasibility(instance, optimal)
    if problems:
        raise GcnError("training routes are infeasible: " + "; ".join(problems))
    X = node_features(instance)
    N = len(X)
    A = input_graph(N, X, knn)
    target = np.zeros((N, N))
    end = instance.end
    for path in optimal.paths:
        merged = [0 if v == end else v for v in path]
        for a, b in zip(merged, merged[1:]):
            target[a, b] = target[b, a] = 1.0
    return X, A, target


def to_example(instance: Instance, optimal: Routes, knn: int | None = None) -> Example:
    X, A, target = make_training_example(instance, optimal, knn)
    return Example(X, normalized_adjacency(A), feature_distances(X), target, default_pos_weight(target))


@dataclass
class TrainConfig:
    steps: int = 300
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int | None = None  # None = full batch
    seed: int = 0
    log_every: int = 0


@dataclass
class TrainResult:
    model: GcnModel
    loss_trace: list[float] = field(default_factory=list)


def dataset_loss(model: GcnModel, examples: list[Example]) -> float:
    total = 0.0
    for ex in examples:
        _, heat = forward(model, ex.X, ex.A_hat, ex.C)
        total += edge_loss(heat, ex.target, ex.pos_weight)[0]
    return total / max(len(examples), 1)


def train(examples: list[Example], model: GcnModel | None = None, config: TrainConfig | None = None) -> TrainResult:
    """Adam on the mean edge loss; deterministic for a fixed seed."""
    config = config or TrainConfig()
    model = (model or init_model(seed=config.seed)).copy()
    rng = np.random.default_rng(config.seed)
    names = sorted(model.params)
    m1 = {k: np.zeros_like(model.params[k]) for k in names}
    m2 = {k: np.zeros_like(model.params[k]) for k in names}
    trace: list[float] = []
    n = len(examples)
    if n == 0:
        raise TrainingError("empty training set")
    bs = n if config.batch_size is None else min(config.batch_size, n)
    order = np.arange(n)
    cursor = n
    for step in range(1, config.steps + 1):
        if bs == n:
            batch = order
        else:
            if cursor + bs > n:
                order = rng.permutation(n)
                cursor = 0
            batch = order[cursor : cursor + bs]
            cursor += bs
        total = 0.0
        grads = {k: np.zeros_like(model.params[k]) for k in names}
        for i in batch:
            ex = examples[i]
            loss, g = loss_and_grad(model, ex.X, ex.A_hat, ex.C, ex.target, ex.pos_weight)
            total += loss
            for k in names:
                grads[k] += g[k]
        total /= len(batch)
        if not np.isfinite(total):
            norms = {k: float(np.linalg.norm(model.params[k])) for k in names}
            raise TrainingError(f"non-finite loss at step {step}; parameter norms {norms}")
        trace.append(total)
        if config.log_every and step % config.log_every == 0:
            log.info("step %d loss %.6f", step, total)
        for k in names:
            g = grads[k] / len(batch)
            m1[k] = config.beta1 * m1[k] + (1 - config.beta1) * g
            m2[k] = config.beta2 * m2[k] + (1 - config.beta2) * g * g
            mhat = m1[k] / (1 - config.beta1**step)
            vhat = m2[k] / (1 - config.beta2**step)
            model.params[k] = model.params[k] - config.lr * mhat / (np.sqrt(vhat) + config.eps)
    return TrainResult(model, trace)


def _relu_pattern(model: GcnModel, example: Example) -> np.ndarray:
    """Signs of every ReLU input, used to spot finite-difference probes that cross a kink."""
    _, _, cache = _forward(model, example.X, example.A_hat, example.C)
    parts = [cache.pre[k] > 0 for k in range(model.config.layers - 1)] + [cache.P > 0]
    return np.concatenate([a.ravel() for a in parts])


def gradient_check(
    model: GcnModel,
    example: Example,
    step: float = 1e-5,
    floor: float = 1e-6,
    min_step: float = 1e-9,
) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    The relative error of each entry is ``|a - f| / max(|a|, |f|, floor)``.
    A probe that flips the sign of any ReLU input straddles a kink where the
    loss is not differentiable along that direction; the step is halved until
    both probes stay on the same linear piece (or ``min_step`` is reached).
    """
    _, grads = loss_and_grad(model, example.X, example.A_hat, example.C, example.target, example.pos_weight)
    base = _relu_pattern(model, example)
    worst = 0.0
    probe = model.copy()

    def loss_at(flat, k, value):
        flat[k] = value
        pattern = _relu_pattern(probe, example)
        loss, _ = loss_and_grad(probe, example.X, example.A_hat, example.C, example.target, example.pos_weight)
        return loss, np.array_equal(pattern, base)

    for name, arr in probe.params.items():
        flat = arr.reshape(-1)
        g = grads[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            h = step
            while True:
                lp, same_p = loss_at(flat, k, orig + h)
                lm, same_m = loss_at(flat, k, orig - h)
                if (same_p and same_m) or h / 2 < min_step:
                    break
                h /= 2
            flat[k] = orig
            fd = (lp - lm) / (2 * h)
            err = abs(g[k] - fd) / max(abs(g[k]), abs(fd), floor)
            worst = max(worst, err)
    return worst


def decode_routes(heatmap: np.ndarray, instance: Instance, beam_width: int = 1) -> Routes:
    """Turn an edge heatmap into a capacity-feasible route plan.

    With ``beam_width == 1`` this is a greedy walk along the most probable
    feasible edge. Wider beams keep the best partial plans by summed log
    probability and return the cheapest completed plan.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    heat = np.asarray(heatmap, dtype=float)
    if beam_width == 1:
        return greedy_routes(instance, heat)

    q = instance.demands
    Q = instance.capacity
    c = merged_costs(instance)
    logp = np.log(np.clip(heat, PROB_CLIP, 1.0))
    m = instance.n_customers
    # state: (score, cost, current, load, visited tuple, paths)
    beam = [(0.0, 0.0, 0, 0, frozenset(), ((0,),))]
    for _ in range(m):
        expanded = []
        for score, cost, cur, load, visited, paths in beam:
            fits = [j for j in instance.customers if j not in visited and load + q[j] <= Q]
            if not fits:
                # vehicle full for every remaining customer: back to depot, new route
                score += logp[cur, 0]
                cost += c[cur, 0]
                cur, load = 0, 0
                paths = paths + ((0,),)
                fits = [j for j in instance.customers if j not in visited and q[j] <= Q]
            for j in fits:
                new_paths = paths[:-1] + (paths[-1] + (j,),)
                expanded.append((score + logp[cur, j], cost + c[cur, j], j, load + int(q[j]),
                                 visited | {j}, new_paths))
        expanded.sort(key=lambda s: (-s[0], s[1], [list(p) for p in s[5]]))
        beam = expanded[:beam_width]
    best = None
    for score, cost, cur, load, visited, paths in beam:
        total = cost + c[cur, 0]
        if best is None or total < best[0] - 1e-15:
            best = (total, paths)
    end = instance.end
    return Routes.from_paths(instance, [list(p) + [end] for p in best[1]])


def save_model(model: GcnModel, path: str | Path) -> None:
    meta = {"version": CHECKPOINT_VERSION, "config": asdict(model.config)}
    arrays = {f"param_{k}": v for k, v in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_model(path: str | Path) -> GcnModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise GcnError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        params = {k[len("param_") :]: np.array(data[k]) for k in data.files if k.startswith("param_")}
    return GcnModel(GcnConfig(**meta["config"]), params)


def predict(model: GcnModel, instance: Instance) -> np.ndarray:
    X = node_features(instance)
    A = input_graph(len(X), X, model.config.knn)
    _, heat = forward(model, X, normalized_adjacency(A))
    return heat


def decoded_cost_ratio(model: GcnModel, instances, optima, beam_width: int = 1) -> tuple[float, int]:
    """Mean decoded-cost / optimal-cost ratio and the number of infeasible decodes."""
    ratios, infeasible = [], 0
    for inst, opt in zip(instances, optima):
        routes = decode_routes(predict(model, inst), inst, beam_width)
        if check_feasibility(inst, routes):
            infeasible += 1
        ratios.append(route_cost(inst, routes) / opt)
    return float(np.mean(ratios)), infeasible
