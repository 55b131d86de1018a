"""Attributed multigraph derivation: the policy network's input encoding.

Node feature layout (11 entries, fixed order):
    0  sum of input tensor sizes            / max node memory figure
    1  sum of output tensor sizes           / max node memory figure
    2  internal workspace memory            / max node memory figure
    3  one-hot: node with the largest memory figure
    4  sum of direct predecessors' runtimes / max op runtime
    5  sum of direct successors' runtimes   / max op runtime
    6  own runtime                          / max op runtime
    7  one-hot: node with the largest runtime
    8  search-based expected device-0 occupancy
    9  search-based expected device-1 occupancy
    10 search-based expected normalized schedule position

Entries 4-7 are zeroed for the peak-memory task; 8-10 are zeroed when no
search-based features are supplied.  A node's "memory figure" is the sum of
its input, output, and internal memory.  Ties in the one-hot argmaxes break
to the lowest op index.

Edge feature layout (3 entries): tensor size / max node memory figure,
control-edge one-hot, and the 1-based ordinal of the tensor among its
producer's outputs divided by the producer's output count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import TASK_PEAK_MEMORY, TASK_RUNTIME, ComputationGraph, check_task

NODE_FEATURE_DIM = 11
EDGE_FEATURE_DIM = 3


@dataclass(frozen=True)
class AttributedMultigraph:
    """Dense feature arrays; one edge per (tensor, consumer) pair."""

    node_features: np.ndarray  # (n_ops, 11) float64
    edge_src: np.ndarray  # (n_edges,) int64, producer op index
    edge_dst: np.ndarray  # (n_edges,) int64, consumer op index
    edge_features: np.ndarray  # (n_edges, 3) float64

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_src.shape[0]


def node_memory_figures(graph: ComputationGraph) -> np.ndarray:
    """Per-op memory figure: input sizes + output sizes + internal memory."""
    fig = np.zeros(graph.n_ops, dtype=np.int64)
    for i, op in enumerate(graph.ops):
        total = op.internal_memory
        for ti in graph.op_inputs[i]:
            total += graph.tensors[ti].size
        for ti in graph.op_outputs[i]:
            total += graph.tensors[ti].size
        fig[i] = total
    return fig


def pinned_index(graph: ComputationGraph, task: str) -> int:
    """Index of the op whose placement is fixed to device 0 during decoding."""
    check_task(task)
    if graph.n_ops == 0:
        raise ValueError("cannot pin a node of an empty graph")
    if task == TASK_PEAK_MEMORY:
        return int(np.argmax(node_memory_figures(graph)))
    durations = np.array([op.duration for op in graph.ops])
    return int(np.argmax(durations))


def pinned_node(graph: ComputationGraph, task: str) -> str:
    return graph.ops[pinned_index(graph, task)].id


def to_multigraph(
    graph: ComputationGraph,
    task: str,
    brkga_features: np.ndarray | None = None,
) -> AttributedMultigraph:
    """Build the attributed multigraph for ``graph``.

    ``brkga_features`` is an optional (n_ops, 3) array of per-node
    [device-0 occupancy, device-1 occupancy, mean schedule position]
    aggregates; absent features are zeroed.  If the graph's maximum memory
    figure or maximum runtime is 0, the corresponding normalized features
    are all 0.
    """
    check_task(task)
    o = graph.n_ops
    x = np.zeros((o, NODE_FEATURE_DIM), dtype=np.float64)

    figures = node_memory_figures(graph)
    durations = np.array([op.duration for op in graph.ops], dtype=np.float64)
    max_mem = float(figures.max()) if o else 0.0
    max_rt = float(durations.max()) if o else 0.0

    in_sizes = np.zeros(o)
    out_sizes = np.zeros(o)
    for i in range(o):
        in_sizes[i] = sum(graph.tensors[t].size for t in graph.op_inputs[i])
        out_sizes[i] = sum(graph.tensors[t].size for t in graph.op_outputs[i])
    internal = np.array([op.internal_memory for op in graph.ops], dtype=np.float64)

    if max_mem > 0:
        x[:, 0] = in_sizes / max_mem
        x[:, 1] = out_sizes / max_mem
        x[:, 2] = internal / max_mem
    if o:
        x[int(np.argmax(figures)), 3] = 1.0

    if task == TASK_RUNTIME:
        if max_rt > 0:
            for i in range(o):
                x[i, 4] = sum(durations[p] for p in graph.op_predecessors[i]) / max_rt
                x[i, 5] = sum(durations[s] for s in graph.op_successors[i]) / max_rt
            x[:, 6] = durations / max_rt
        if o:
            x[int(np.argmax(durations)), 7] = 1.0

    if brkga_features is not None:
        feats = np.asarray(brkga_features, dtype=np.float64)
        if feats.shape != (o, 3):
            raise ValueError(f"brkga_features must have shape ({o}, 3), got {feats.shape}")
        x[:, 8:11] = feats

    n_edges = len(graph.consumers)
    src = np.zeros(n_edges, dtype=np.int64)
    dst = np.zeros(n_edges, dtype=np.int64)
    ef = np.zeros((n_edges, EDGE_FEATURE_DIM), dtype=np.float64)
    for e, edge in enumerate(graph.consumers):
        ti = graph.tensor_index[edge.tensor]
        tensor = graph.tensors[ti]
        producer = graph.op_index[tensor.producer]
        src[e] = producer
        dst[e] = graph.op_index[edge.op]
        if max_mem > 0:
            ef[e, 0] = tensor.size / max_mem
        ef[e, 1] = 1.0 if edge.control else 0.0
        outputs = graph.op_outputs[producer]
        ef[e, 2] = (outputs.index(ti) + 1) / len(outputs)

    return AttributedMultigraph(node_features=x, edge_src=src, edge_dst=dst, edge_features=ef)
