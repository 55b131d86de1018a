"""Command-line interface.

Subcommands: generate, optimize, train, evaluate, inspect.  All randomness
flows from --seed; equal flags and seed produce byte-identical primary
outputs regardless of --threads.

Exit codes: 0 success, 1 I/O or data error, 2 usage/config error,
3 capability exceeded (e.g. the exhaustive oracle's size cap).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .graph import (
    SPLITS,
    TASKS,
    GraphJsonError,
    load_dataset,
    read_graph_json,
    read_manifest,
)
from .simulator import SimConfig, TransferOp, simulate, trace_events

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_CAPABILITY = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _sim_config(args) -> SimConfig:
    capacity = math.inf if args.capacity is None else args.capacity
    return SimConfig(devices=args.devices, memory_capacity=capacity)


def _require_seed(args) -> int:
    if args.seed is None:
        raise CliError("--seed is required for this subcommand")
    return args.seed


def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


def _schedule_to_json(schedule):
    out = []
    for item in schedule:
        if isinstance(item, TransferOp):
            out.append(
                {
                    "type": "transfer",
                    "tensor": item.tensor,
                    "from_device": item.from_device,
                    "to_device": item.to_device,
                }
            )
        else:
            out.append({"type": "op", "op": item})
    return out


def cmd_generate(args) -> int:
    from .datagen import GenSpec, build_dataset

    seed = _require_seed(args)
    spec = GenSpec.from_json(args.config) if args.config else GenSpec()
    report = build_dataset(
        spec,
        counts=(args.train, args.valid, args.test),
        copies=args.copies,
        out_dir=args.out,
        seed=seed,
        apply_filter=not args.no_filter,
    )
    print(
        f"wrote {report.files} graphs to {report.out_dir} "
        f"(kept {report.kept}/{report.attempts} candidates, "
        f"acceptance rate {report.acceptance_rate:.2f}, "
        f"mean filter improvement {100 * report.mean_improvement:.1f}%)"
    )
    return EXIT_OK


def _load_policy(args):
    if args.checkpoint is None:
        raise CliError(f"algorithm {args.algorithm!r} requires --checkpoint")
    from .policy import load_checkpoint

    return load_checkpoint(args.checkpoint)


def cmd_optimize(args) -> int:
    from .baselines import OracleCapError, TunedBrkga, get_algorithm
    from .brkga import BrkgaParams

    try:
        algorithm = get_algorithm(args.algorithm)
    except KeyError as exc:
        raise CliError(str(exc))
    if args.algorithm != "oracle":
        seed = _require_seed(args)
    else:
        seed = args.seed if args.seed is not None else 0
    graph = read_graph_json(args.graph)
    config = _sim_config(args)
    context = {"workers": args.threads, "oracle_cap": args.oracle_cap}
    if args.algorithm in ("regal", "idrs"):
        context["policy"] = _load_policy(args)
    if args.algorithm == "tuned_brkga":
        if args.tuned_params is None:
            raise CliError("algorithm 'tuned_brkga' requires --tuned-params")
        context["tuned"] = _read_tuned(args.tuned_params)

    rng = rngmod.generator(seed, "optimize", args.algorithm)
    t0 = time.perf_counter()
    try:
        result = algorithm(graph, args.task, config, args.budget, rng, context)
    except OracleCapError as exc:
        raise CliError(str(exc), code=EXIT_CAPABILITY)
    wall = time.perf_counter() - t0

    solution = {
        "algorithm": args.algorithm,
        "task": args.task,
        "objective": result.objective,
        "feasible": result.fitness.feasible,
        "evaluations_used": result.evaluations,
        "wall_time": wall,
        "placement": result.placement,
        "schedule": _schedule_to_json(result.schedule),
    }
    text = json.dumps(solution, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    if args.trace:
        report = simulate(graph, result.placement, result.schedule, config)
        Path(args.trace).write_text(
            json.dumps(trace_events(report), indent=1) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def _read_tuned(path):
    from .baselines import TunedBrkga
    from .brkga import BrkgaParams

    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return TunedBrkga(
        params=BrkgaParams(**data["params"]),
        alpha=data["alpha"],
        beta=data["beta"],
        mean_objective=data.get("mean_objective", 0.0),
        grid_index=data.get("grid_index", -1),
    )


def _write_tuned(tuned, path):
    data = {
        "params": {
            "population": tuned.params.population,
            "elites": tuned.params.elites,
            "children": tuned.params.children,
            "elite_bias": tuned.params.elite_bias,
            "populations": tuned.params.populations,
            "budget": tuned.params.budget,
        },
        "alpha": tuned.alpha,
        "beta": tuned.beta,
        "mean_objective": tuned.mean_objective,
        "grid_index": tuned.grid_index,
    }
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def cmd_train(args) -> int:
    import torch

    from .brkga import BrkgaParams
    from .policy import PolicyConfig, PolicyNetwork
    from .trainer import TrainConfig, train

    torch.set_num_threads(1)  # keep results independent of host parallelism
    seed = _require_seed(args)
    dataset = load_dataset(args.dataset)
    config = _sim_config(args)
    policy_config = PolicyConfig(
        devices=args.devices,
        hidden=args.hidden,
        rounds=args.rounds,
        k_place=args.k_place,
        k_sched=args.k_sched,
        aggregation=args.aggregation,
        node_update=args.node_update,
        residual=args.residual,
        placement_actions=not args.no_placement_actions,
        scheduling_actions=not args.no_scheduling_actions,
    )
    policy = PolicyNetwork(policy_config, rngmod.generator(seed, "init"))
    train_config = TrainConfig(
        steps=args.steps,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        train_budget=args.budget,
        feature_budget=args.feature_budget,
        val_interval=args.val_interval,
        threads=args.threads,
    )
    result = train(
        policy, dataset, args.task, train_config, BrkgaParams(), config, seed, args.out
    )
    print(
        f"trained {args.steps} steps; best validation reward {result.best_val_reward:.4f}; "
        f"checkpoint at {result.checkpoint_path}"
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    import torch

    from .baselines import default_grid, tuned_brkga_search
    from .trainer import evaluate

    torch.set_num_threads(1)
    seed = _require_seed(args)
    dataset = load_dataset(args.dataset)
    entries = read_manifest(Path(args.dataset) / "manifest.json")
    base_ids = {e.file: e.base_id for e in entries}
    config = _sim_config(args)
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    context = {"workers": args.threads}
    if any(a in ("regal", "idrs") for a in algorithms):
        context["policy"] = _load_policy(args)
    if "tuned_brkga" in algorithms:
        if args.tuned_params:
            context["tuned"] = _read_tuned(args.tuned_params)
        else:
            grid = default_grid()
            if args.tune_grid == "small":
                grid = grid[:: len(grid) // 24]
            sample = dataset["train"][: args.tune_sample]
            if not sample:
                raise CliError("tuning 'tuned_brkga' needs train-split graphs")
            context["tuned"] = tuned_brkga_search(
                sample, args.task, config, grid, args.budget, seed
            )
            _write_tuned(context["tuned"], Path(args.out) / "tuned_params.json")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = evaluate(
        dataset,
        args.split,
        args.task,
        algorithms,
        config,
        args.budget,
        seed,
        context=context,
        base_ids=base_ids,
        include_oracle=args.include_oracle,
    )
    _write_csv(
        out_dir / "metrics.csv",
        report.rows,
        ["algorithm", "split", "mean_improvement_pct", "mean_gap_pct", "n_graphs"],
    )
    _write_csv(out_dir / "timings.csv", report.timings, ["algorithm", "mean_wall_time_sec"])
    if args.histogram_bins > 0:
        _write_histogram(out_dir / "improvement_histogram.csv", report, args.histogram_bins)
    if args.by_topology:
        _write_topology(out_dir / "by_topology.csv", report)
    for row in report.rows:
        print(
            f"{row['algorithm']:>14s}  improvement {row['mean_improvement_pct']:+7.2f}%  "
            f"gap {row['mean_gap_pct']:6.2f}%  n={row['n_graphs']}"
        )
    if report.excluded:
        print(f"excluded {report.excluded} graphs with zero reference/best objective")
    return EXIT_OK


def _write_histogram(path, report, bins):
    rows = []
    for name in sorted({r.algorithm for r in report.records}):
        vals = [r.improvement_pct for r in report.records if r.algorithm == name]
        counts, edges = np.histogram(vals, bins=bins)
        for k in range(len(counts)):
            rows.append(
                {
                    "algorithm": name,
                    "bin_left": edges[k],
                    "bin_right": edges[k + 1],
                    "count": int(counts[k]),
                }
            )
    _write_csv(path, rows, ["algorithm", "bin_left", "bin_right", "count"])


def _write_topology(path, report):
    rows = []
    pairs = sorted({(r.algorithm, r.base_id) for r in report.records})
    for name, base in pairs:
        vals = [
            r.improvement_pct
            for r in report.records
            if r.algorithm == name and r.base_id == base
        ]
        rows.append(
            {
                "algorithm": name,
                "base_id": base,
                "p25": float(np.percentile(vals, 25)),
                "p50": float(np.percentile(vals, 50)),
                "p75": float(np.percentile(vals, 75)),
                "min": float(np.min(vals)),
                "max": float(np.max(vals)),
                "n": len(vals),
            }
        )
    _write_csv(path, rows, ["algorithm", "base_id", "p25", "p50", "p75", "min", "max", "n"])


def cmd_inspect(args) -> int:
    import networkx as nx

    rows = []
    if args.dataset:
        entries = read_manifest(Path(args.dataset) / "manifest.json")
        targets = [(e.file, Path(args.dataset) / e.file, e.split) for e in entries]
    else:
        targets = [(Path(args.graph).name, Path(args.graph), "")]
    for name, path, split in targets:
        graph = read_graph_json(path)
        und = nx.Graph()
        und.add_nodes_from(range(graph.n_ops))
        for i, preds in enumerate(graph.op_predecessors):
            for p in preds:
                und.add_edge(p, i)
        diameter = 0
        for comp in nx.connected_components(und):
            if len(comp) > 1:
                diameter = max(diameter, nx.diameter(und.subgraph(comp)))
        rows.append(
            {
                "file": name,
                "split": split,
                "ops": graph.n_ops,
                "tensors": graph.n_tensors,
                "edges": len(graph.consumers),
                "diameter": diameter,
            }
        )
    columns = ["file", "split", "ops", "tensors", "edges", "diameter"]
    if args.out:
        _write_csv(args.out, rows, columns)
    else:
        writer = csv.DictWriter(sys.stdout, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphsched",
        description="Computation-graph placement and scheduling optimizer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, task=True):
        p.add_argument("--seed", type=int, default=None, help="master random seed")
        p.add_argument("--devices", type=int, default=2)
        p.add_argument("--capacity", type=float, default=None,
                       help="per-device memory capacity in bytes (default: unlimited)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads; results do not depend on this")
        if task:
            p.add_argument("--task", choices=TASKS, default="runtime")

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    common(p, task=False)
    p.add_argument("--config", help="GenSpec JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, default=200)
    p.add_argument("--valid", type=int, default=50)
    p.add_argument("--test", type=int, default=50)
    p.add_argument("--copies", type=int, default=0, help="augmented copies per base graph")
    p.add_argument("--no-filter", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("optimize", help="optimize one graph file")
    common(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--algorithm", required=True)
    p.add_argument("--budget", type=int, default=5000)
    p.add_argument("--checkpoint")
    p.add_argument("--tuned-params")
    p.add_argument("--oracle-cap", type=int, default=6)
    p.add_argument("--out", help="solution JSON path (default: stdout)")
    p.add_argument("--trace", help="write a step-by-step memory trace JSON here")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("train", help="train the proposal policy")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--feature-budget", type=int, default=400)
    p.add_argument("--val-interval", type=int, default=200)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--rounds", type=int, default=2)
    p.add_argument("--k-place", type=int, default=2)
    p.add_argument("--k-sched", type=int, default=16)
    p.add_argument("--aggregation", choices=("sum", "mean"), default="mean")
    p.add_argument("--node-update", choices=("mlp", "gru"), default="gru")
    p.add_argument("--residual", action="store_true")
    p.add_argument("--no-placement-actions", action="store_true")
    p.add_argument("--no-scheduling-actions", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="compare algorithms on a dataset split")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--algorithms", required=True, help="comma-separated names")
    p.add_argument("--budget", type=int, default=5000)
    p.add_argument("--checkpoint")
    p.add_argument("--tuned-params")
    p.add_argument("--tune-grid", choices=("full", "small"), default="small")
    p.add_argument("--tune-sample", type=int, default=10)
    p.add_argument("--include-oracle", action="store_true")
    p.add_argument("--histogram-bins", type=int, default=0)
    p.add_argument("--by-topology", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="per-graph statistics as CSV")
    common(p, task=False)
    p.add_argument("--graph")
    p.add_argument("--dataset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.command == "inspect" and not (args.graph or args.dataset):
        print("inspect needs --graph or --dataset", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except GraphJsonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
