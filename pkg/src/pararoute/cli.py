"""Command-line interface.

Exit codes for ``solve`` (and ``decode``/``oracle`` where they apply)::

    0  optimal (or the command succeeded)
    1  I/O, parse or usage error
    2  limit reached with an incumbent written
    3  model infeasible
    4  limit reached before any incumbent was found
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .branch_bound import (
    STATUS_OPTIMAL,
    InfeasibleModelError,
    NoIncumbentError,
    SearchParams,
    solve,
)
from .gcn import (
    GcnConfig,
    GcnError,
    TrainConfig,
    decode_routes,
    dataset_loss,
    gradient_check,
    init_model,
    load_model,
    predict,
    save_model,
    to_example,
    train,
)
from .grid import (
    CSV_HEADER,
    GridConfig,
    emit_trends,
    read_results_csv,
    run_scenario_grid,
    write_results_csv,
)
from .instance import (
    DEFAULT_JITTER,
    GREENSBORO,
    GeneratorConfig,
    Instance,
    InstanceError,
    generate_instance,
    instance_to_dict,
    read_instance,
    write_instance,
)
from .milp import ModelInfeasibleError, build_model, check_feasibility, route_cost
from .oracle import (
    MAX_CVRP_CUSTOMERS,
    OracleInfeasibleError,
    OracleSizeError,
    exact_cvrp,
)
from .solution import write_solution

log = logging.getLogger("pararoute")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_LIMIT = 2
EXIT_INFEASIBLE = 3
EXIT_NO_INCUMBENT = 4


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--output", "-o", help="output path (default: stdout where sensible)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="tabular output format")
    p.add_argument("--time-limit", type=float, default=30.0, help="solver time limit in seconds")
    p.add_argument("--verbose", "-v", action="count", default=0)
    return p


def _generator_flags(p: argparse.ArgumentParser, with_size: bool = True) -> None:
    if with_size:
        p.add_argument("--requests", type=int, default=10, help="number of persons requesting a ride")
        p.add_argument("--capacity", type=int, default=10, help="vehicle seats Q")
    p.add_argument("--center-lat", type=float, default=GREENSBORO[0])
    p.add_argument("--center-lon", type=float, default=GREENSBORO[1])
    p.add_argument("--jitter", type=float, default=DEFAULT_JITTER, help="half-width of the square in degrees")
    p.add_argument("--demand-mode", choices=("unit", "grouped"), default="grouped")
    p.add_argument("--max-group", type=int, default=4)


def _generator_config(args, requests: int | None = None, capacity: int | None = None) -> GeneratorConfig:
    return GeneratorConfig(
        requests if requests is not None else args.requests,
        capacity if capacity is not None else args.capacity,
        args.center_lat,
        args.center_lon,
        args.jitter,
        args.demand_mode,
        args.max_group,
    )


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="pararoute", description="Paratransit routing solver and experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a random instance file")
    _generator_flags(p)

    p = sub.add_parser("solve", parents=[common], help="solve an instance with branch-and-bound")
    p.add_argument("instance")
    p.add_argument("--node-limit", type=int)
    p.add_argument("--gap-target", type=float, default=0.0, help="stop once the gap (percent) is at most this")
    p.add_argument("--min-vehicles", type=int)
    p.add_argument("--max-vehicles", type=int)
    p.add_argument("--node-selection", choices=("best-bound-plunge", "best-bound"), default="best-bound-plunge")
    p.add_argument("--no-heuristic", action="store_true", help="skip the root construction heuristic")
    p.add_argument("--gcn", metavar="CHECKPOINT", help="seed the incumbent with a decoded GCN plan")
    p.add_argument("--beam-width", type=int, default=1)

    p = sub.add_parser("oracle", parents=[common], help="exact solution by enumeration (small instances)")
    p.add_argument("instance")

    p = sub.add_parser("grid", parents=[common], help="run the request x capacity scenario grid")
    p.add_argument("--requests", type=_int_list, default=GridConfig.requests)
    p.add_argument("--capacities", type=_int_list, default=GridConfig.capacities)
    p.add_argument("--node-limit", type=int)
    p.add_argument("--trends", metavar="DIR", help="also write trend CSVs into DIR")
    _generator_flags(p, with_size=False)

    p = sub.add_parser("trends", parents=[common], help="write trend CSVs from a grid results file")
    p.add_argument("results")

    p = sub.add_parser("train-gcn", parents=[common], help="train the edge-heatmap GCN on oracle labels")
    p.add_argument("--manifest", help="file listing instance paths, one per line (default: generate)")
    p.add_argument("--train-count", type=int, default=200)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--knn", type=int, default=3, help="k nearest neighbours in the input graph (0 = complete)")
    _generator_flags(p)

    p = sub.add_parser("decode", parents=[common], help="decode GCN heatmap routes for an instance")
    p.add_argument("instance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--beam-width", type=int, default=1)

    p = sub.add_parser("gradcheck", parents=[common], help="compare GCN gradients with finite differences")
    p.add_argument("--checkpoint", help="check this model instead of fresh initialisations")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--requests", type=int, default=5)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _stats_line(fmt: str, inst: Instance, stats) -> str:
    if fmt == "json":
        d = {"n": inst.total_demand, "Q": inst.capacity, **stats.to_dict()}
        return json.dumps(d) + "\n"
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(stats.table_row(inst.total_demand, inst.capacity))
    return buf.getvalue()


def cmd_generate(args) -> int:
    inst = generate_instance(_generator_config(args), args.seed)
    if args.output:
        write_instance(inst, args.output)
    else:
        sys.stdout.write(json.dumps(instance_to_dict(inst), indent=2) + "\n")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    warm = None
    if args.gcn:
        warm = decode_routes(predict(load_model(args.gcn), inst), inst, args.beam_width)
    params = SearchParams(
        time_limit=args.time_limit,
        node_limit=args.node_limit,
        gap_target=args.gap_target,
        node_selection=args.node_selection,
        seed=args.seed,
        root_heuristic=not args.no_heuristic,
        warm_start=warm,
    )
    try:
        model = build_model(inst, args.min_vehicles, args.max_vehicles)
        routes, stats = solve(model, params)
    except (InfeasibleModelError, ModelInfeasibleError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NoIncumbentError as exc:
        print(f"no incumbent: {exc} (best bound {exc.best_bound:.10g})", file=sys.stderr)
        return EXIT_NO_INCUMBENT
    if args.output:
        write_solution(args.output, inst, routes, stats.to_dict())
    sys.stdout.write(_stats_line(args.format, inst, stats))
    return EXIT_OK if stats.status == STATUS_OPTIMAL else EXIT_LIMIT


def cmd_oracle(args) -> int:
    inst = read_instance(args.instance)
    try:
        result = exact_cvrp(inst)
    except OracleInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if args.output:
        write_solution(args.output, inst, result.routes, {"partitions_evaluated": result.partitions_evaluated})
    if args.format == "json":
        print(json.dumps({"objective": result.objective, "routes": [list(p) for p in result.routes.paths]}))
    else:
        print(repr(result.objective))
    return EXIT_OK


def _rows_text(rows, fmt: str) -> str:
    if fmt == "json":
        return json.dumps([r.to_dict() for r in rows], indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_values())
    return buf.getvalue()


def cmd_grid(args) -> int:
    config = GridConfig(
        requests=args.requests,
        capacities=args.capacities,
        seed_base=args.seed,
        time_limit=args.time_limit,
        node_limit=args.node_limit,
        center_lat=args.center_lat,
        center_lon=args.center_lon,
        jitter=args.jitter,
        demand_mode=args.demand_mode,
        max_group=args.max_group,
    )

    def progress(row):
        log.info("n=%d Q=%d %s objective=%s gap=%s", row.n, row.Q, row.status or row.error,
                 row.objective_cost, row.gap_percent)

    rows = run_scenario_grid(config, progress)
    if args.format == "csv" and args.output:
        write_results_csv(rows, args.output)
    else:
        _emit(_rows_text(rows, args.format), args.output)
    if args.trends:
        for path in emit_trends(rows, args.trends):
            log.info("wrote %s", path)
    return EXIT_OK if all(r.ok for r in rows) else EXIT_ERROR


def cmd_trends(args) -> int:
    rows = read_results_csv(args.results)
    for path in emit_trends(rows, args.output or "trends"):
        print(path)
    return EXIT_OK


def read_manifest(path: str | Path) -> list[Instance]:
    """Instances listed in a manifest: one path per line, ``#`` starts a comment.

    Relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    instances = []
    for line in path.read_text().splitlines():
        entry = line.split("#", 1)[0].strip()
        if entry:
            p = Path(entry)
            instances.append(read_instance(p if p.is_absolute() else path.parent / p))
    return instances


def oracle_label(inst: Instance, time_limit: float):
    """Optimal routes for a training instance: enumeration when small, otherwise branch-and-bound."""
    if inst.n_customers <= MAX_CVRP_CUSTOMERS:
        return exact_cvrp(inst).routes
    routes, stats = solve(build_model(inst), SearchParams(time_limit=time_limit))
    if stats.status != STATUS_OPTIMAL:
        log.warning("label for seed %d is not proven optimal (gap %.3f%%)", inst.seed, stats.gap_percent)
    return routes


def cmd_train_gcn(args) -> int:
    if args.manifest:
        instances = read_manifest(args.manifest)
    else:
        config = _generator_config(args)
        instances = [generate_instance(config, args.seed + k) for k in range(args.train_count)]
    knn = args.knn or None
    examples = [to_example(inst, oracle_label(inst, args.time_limit), knn) for inst in instances]
    model = init_model(GcnConfig(hidden=args.hidden, layers=args.layers, knn=knn), args.seed)
    before = dataset_loss(model, examples)
    cfg = TrainConfig(steps=args.steps, lr=args.lr, batch_size=args.batch_size, seed=args.seed,
                      log_every=100 if args.verbose else 0)
    result = train(examples, model, cfg)
    after = dataset_loss(result.model, examples)
    save_model(result.model, args.output or "gcn.npz")
    print(f"examples={len(examples)} loss_before={before:.6f} loss_after={after:.6f} "
          f"reduction={1 - after / before:.3f}")
    return EXIT_OK


def cmd_decode(args) -> int:
    inst = read_instance(args.instance)
    routes = decode_routes(predict(load_model(args.checkpoint), inst), inst, args.beam_width)
    problems = check_feasibility(inst, routes)
    if args.output:
        write_solution(args.output, inst, routes)
    cost = route_cost(inst, routes)
    if args.format == "json":
        print(json.dumps({"objective": cost, "routes": [list(p) for p in routes.paths], "violations": problems}))
    else:
        print(repr(cost))
    return EXIT_OK if not problems else EXIT_INFEASIBLE


def cmd_gradcheck(args) -> int:
    worst = 0.0
    fixed = load_model(args.checkpoint) if args.checkpoint else None
    for k in range(args.trials):
        seed = args.seed + k
        rng = np.random.default_rng(seed)
        inst = generate_instance(GeneratorConfig(args.requests, args.requests, demand_mode="unit"), seed)
        optimal = exact_cvrp(inst).routes if inst.n_customers <= MAX_CVRP_CUSTOMERS else None
        if optimal is None:
            raise GcnError("gradcheck instances must be small enough for the oracle")
        model = fixed or init_model(GcnConfig(hidden=args.hidden, layers=args.layers), int(rng.integers(2**31)))
        err = gradient_check(model, to_example(inst, optimal, model.config.knn))
        log.info("seed %d max relative error %.3e", seed, err)
        worst = max(worst, err)
    ok = worst < args.tolerance
    print(f"max_relative_error={worst:.3e} tolerance={args.tolerance:g} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_ERROR


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "oracle": cmd_oracle,
    "grid": cmd_grid,
    "trends": cmd_trends,
    "train-gcn": cmd_train_gcn,
    "decode": cmd_decode,
    "gradcheck": cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, InstanceError, GcnError, OracleSizeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
