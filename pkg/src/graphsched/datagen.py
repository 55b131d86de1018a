"""Synthetic computation-graph generation.

Topologies come from four classical random-graph families.  The undirected
sample is oriented by a random node order, a cost-free source and sink are
attached to the heads and tails, each op gets 0/1/2 output tensors with
probabilities 0.1/0.8/0.1, and every dependency is a control edge with
probability 0.2 (always, when the producer has no outputs) or a data edge on
a uniformly chosen output tensor.  Tensor sizes are Normal(50, 10) rounded
to an integer floor of 1; op durations are (input + output bytes) * (1 + r)
with r ~ Normal(0, 0.1), floored at 0.

Generated graphs are kept only when a short uniform search improves on a
longer one by at least the configured threshold (default 18% on the runtime
task), which filters out instances whose schedule is essentially forced.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import networkx as nx
import numpy as np

from . import rng as rngmod
from .brkga import BrkgaParams, ProposalSet, chromosome_length, run
from .graph import (
    TASK_RUNTIME,
    ComputationGraph,
    ConsumerEdge,
    GraphJsonError,
    ManifestEntry,
    Op,
    Tensor,
    write_graph_json,
    write_manifest,
)
from .simulator import SimConfig

FAMILIES = ("erdos_renyi", "barabasi_albert", "watts_strogatz", "stochastic_block")


@dataclass(frozen=True)
class GenSpec:
    family: str = "mixed"  # one of FAMILIES or "mixed"
    min_ops: int = 50
    max_ops: int = 200
    er_p: float = 0.05
    ba_m: int = 2
    ws_k: int = 4
    ws_p: float = 0.3
    sbm_blocks: int = 4
    sbm_p_in: float = 0.3
    sbm_p_out: float = 0.01
    tensor_size_mean: float = 50.0
    tensor_size_std: float = 10.0
    duration_noise_std: float = 0.1
    out_tensor_probs: tuple[float, float, float] = (0.1, 0.8, 0.1)
    control_prob: float = 0.2
    filter_threshold: float = 0.18
    filter_small_budget: int = 1000
    filter_large_budget: int = 10000

    def __post_init__(self):
        if self.family != "mixed" and self.family not in FAMILIES:
            raise ValueError(f"family must be 'mixed' or one of {FAMILIES}")
        if not 2 <= self.min_ops <= self.max_ops:
            raise ValueError("need 2 <= min_ops <= max_ops")

    @classmethod
    def from_json(cls, path) -> "GenSpec":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise GraphJsonError(f"unknown key {key!r} in generation spec")
        if "out_tensor_probs" in data:
            data["out_tensor_probs"] = tuple(data["out_tensor_probs"])
        return cls(**data)


def _sample_topology(spec: GenSpec, family: str, n: int, rng: np.random.Generator):
    nx_seed = int(rng.integers(2**63))
    if family == "erdos_renyi":
        return nx.erdos_renyi_graph(n, spec.er_p, seed=nx_seed)
    if family == "barabasi_albert":
        return nx.barabasi_albert_graph(n, min(spec.ba_m, n - 1), seed=nx_seed)
    if family == "watts_strogatz":
        return nx.watts_strogatz_graph(n, min(spec.ws_k, n - 1), spec.ws_p, seed=nx_seed)
    if family == "stochastic_block":
        base = n // spec.sbm_blocks
        sizes = [base] * spec.sbm_blocks
        sizes[-1] += n - base * spec.sbm_blocks
        sizes = [s for s in sizes if s > 0]
        probs = [
            [spec.sbm_p_in if i == j else spec.sbm_p_out for j in range(len(sizes))]
            for i in range(len(sizes))
        ]
        return nx.stochastic_block_model(sizes, probs, seed=nx_seed)
    raise ValueError(f"unknown family {family!r}")


def generate_instance(
    spec: GenSpec, rng: np.random.Generator, family: str | None = None
) -> ComputationGraph:
    """One synthetic instance; always a valid DAG with one source and sink."""
    if family is None:
        family = spec.family
        if family == "mixed":
            family = FAMILIES[int(rng.integers(len(FAMILIES)))]
    n = int(rng.integers(spec.min_ops, spec.max_ops + 1))
    undirected = _sample_topology(spec, family, n, rng)

    # Orient every edge by a random node order.
    order = rng.permutation(n)
    position = np.empty(n, dtype=np.int64)
    position[order] = np.arange(n)
    edges = sorted(
        (int(u), int(v)) if position[u] < position[v] else (int(v), int(u))
        for u, v in undirected.edges()
    )

    has_pred = np.zeros(n, dtype=bool)
    has_succ = np.zeros(n, dtype=bool)
    for u, v in edges:
        has_succ[u] = True
        has_pred[v] = True

    # Output tensors per original node.
    out_counts = rng.choice(3, size=n, p=list(spec.out_tensor_probs))
    op_names = [f"n{i}" for i in range(n)]
    tensors: list[Tensor] = []
    out_tensors: list[list[str]] = [[] for _ in range(n)]
    for i in range(n):
        for k in range(int(out_counts[i])):
            size = max(1, int(round(rng.normal(spec.tensor_size_mean, spec.tensor_size_std))))
            tid = f"{op_names[i]}.{k}"
            tensors.append(Tensor(tid, op_names[i], size))
            out_tensors[i].append(tid)

    control_tensor: dict[str, str] = {}

    def control_of(op_name: str) -> str:
        if op_name not in control_tensor:
            tid = f"{op_name}.ctl"
            tensors.append(Tensor(tid, op_name, 0))
            control_tensor[op_name] = tid
        return control_tensor[op_name]

    consumers: list[ConsumerEdge] = []
    seen: set[tuple[str, str]] = set()

    def connect(tid: str, dst: str, control: bool) -> None:
        if (tid, dst) not in seen:
            seen.add((tid, dst))
            consumers.append(ConsumerEdge(tid, dst, control))

    for u, v in edges:
        if out_counts[u] == 0 or rng.random() < spec.control_prob:
            connect(control_of(op_names[u]), op_names[v], True)
        else:
            pick = int(rng.integers(out_counts[u]))
            connect(out_tensors[u][pick], op_names[v], False)

    # Cost-free source and sink tied to every head/tail by control edges.
    source_ctl = Tensor("source.ctl", "source", 0)
    tensors.append(source_ctl)
    for i in range(n):
        if not has_pred[i]:
            connect(source_ctl.id, op_names[i], True)
    for i in range(n):
        if not has_succ[i]:
            connect(control_of(op_names[i]), "sink", True)

    size_of = {t.id: t.size for t in tensors}
    input_bytes = [0] * n
    for edge in consumers:
        if edge.op != "sink":
            input_bytes[int(edge.op[1:])] += size_of[edge.tensor]
    out_bytes = [0] * n
    for t in tensors:
        if t.producer != "source":
            out_bytes[int(t.producer[1:])] += t.size

    ops = [Op("source", 0.0, 0)]
    for i in range(n):
        total = input_bytes[i] + out_bytes[i]
        duration = max(0.0, total * (1.0 + rng.normal(0.0, spec.duration_noise_std)))
        ops.append(Op(op_names[i], duration, 0))
    ops.append(Op("sink", 0.0, 0))

    return ComputationGraph(ops, tensors, consumers)


def filter_interesting(
    graph: ComputationGraph,
    spec: GenSpec,
    config: SimConfig,
    rng: np.random.Generator,
    params: BrkgaParams | None = None,
) -> tuple[bool, float]:
    """Keep a graph iff extending the uniform search budget from the small
    to the large setting improves the runtime objective by at least the
    threshold.  Both runs share one seeded stream (nested budgets), so the
    improvement is never negative."""
    if params is None:
        params = BrkgaParams()
    n = chromosome_length(graph, config.devices)
    state = rng.bit_generator.state
    small_rng = np.random.Generator(type(rng.bit_generator)())
    small_rng.bit_generator.state = state
    large_rng = np.random.Generator(type(rng.bit_generator)())
    large_rng.bit_generator.state = state
    small = run(
        graph, TASK_RUNTIME, config, ProposalSet.uniform(n),
        replace(params, budget=spec.filter_small_budget), small_rng,
    )
    large = run(
        graph, TASK_RUNTIME, config, ProposalSet.uniform(n),
        replace(params, budget=spec.filter_large_budget), large_rng,
    )
    o_small = small.best_fitness.objective
    o_large = large.best_fitness.objective
    if o_small == 0.0:
        return False, 0.0
    improvement = (o_small - o_large) / o_small
    return improvement >= spec.filter_threshold, improvement


def augment(
    graph: ComputationGraph, copies: int, rng: np.random.Generator
) -> list[ComputationGraph]:
    """The original plus ``copies`` variants with multiplicative cost noise.

    Each copy draws one Uniform(0.5, 1.5) factor per tensor and one per op;
    zero sizes and durations stay zero, so control edges and the cost-free
    source/sink are preserved, and the topology never changes.
    """
    out = [graph]
    for _c in range(copies):
        size_f = rng.uniform(0.5, 1.5, size=graph.n_tensors)
        dur_f = rng.uniform(0.5, 1.5, size=graph.n_ops)
        tensors = [
            replace(t, size=0 if t.size == 0 else max(1, int(round(t.size * size_f[i]))))
            for i, t in enumerate(graph.tensors)
        ]
        ops = [
            replace(op, duration=op.duration * dur_f[i])
            for i, op in enumerate(graph.ops)
        ]
        out.append(ComputationGraph(ops, tensors, graph.consumers))
    return out


@dataclass
class BuildReport:
    out_dir: Path
    manifest_path: Path
    files: int
    attempts: int
    kept: int
    acceptance_rate: float
    mean_improvement: float


def build_dataset(
    spec: GenSpec,
    counts: tuple[int, int, int],
    copies: int,
    out_dir,
    seed: int,
    config: SimConfig | None = None,
    apply_filter: bool = True,
    max_attempts_per_graph: int = 200,
) -> BuildReport:
    """Generate filtered base graphs, augment each, and write the dataset.

    Splits are disjoint by construction: a base graph and all of its
    augmented copies land in the same split.  Regeneration with the same
    seed writes byte-identical files.
    """
    if config is None:
        config = SimConfig(memory_capacity=math.inf)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    split_of: list[str] = (
        ["train"] * counts[0] + ["valid"] * counts[1] + ["test"] * counts[2]
    )
    entries: list[ManifestEntry] = []
    attempts = 0
    improvements: list[float] = []

    for b, split in enumerate(split_of):
        base_id = f"g{b:04d}"
        pick_rng = rngmod.generator(seed, "family", b)
        family = spec.family
        if family == "mixed":
            family = FAMILIES[int(pick_rng.integers(len(FAMILIES)))]
        kept_graph = None
        for attempt in range(max_attempts_per_graph):
            attempts += 1
            gen_rng = rngmod.generator(seed, "gen", b, attempt)
            graph = generate_instance(spec, gen_rng, family=family)
            if not apply_filter:
                kept_graph = graph
                break
            keep, improvement = filter_interesting(
                graph, spec, config, rngmod.generator(seed, "filter", b, attempt)
            )
            if keep:
                improvements.append(improvement)
                kept_graph = graph
                break
        if kept_graph is None:
            raise RuntimeError(
                f"no graph passed the filter in {max_attempts_per_graph} attempts"
            )
        variants = augment(kept_graph, copies, rngmod.generator(seed, "augment", b))
        for v, variant in enumerate(variants):
            name = f"{base_id}_v{v:02d}.json"
            write_graph_json(variant, out_dir / name)
            entries.append(ManifestEntry(name, split, base_id, family))

    manifest_path = out_dir / "manifest.json"
    write_manifest(entries, manifest_path)
    kept = len(split_of)
    return BuildReport(
        out_dir=out_dir,
        manifest_path=manifest_path,
        files=len(entries),
        attempts=attempts,
        kept=kept,
        acceptance_rate=kept / attempts if attempts else 0.0,
        mean_improvement=float(np.mean(improvements)) if improvements else 0.0,
    )
