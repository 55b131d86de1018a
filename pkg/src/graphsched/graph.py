"""Computation-graph data model and JSON interchange.

An op is an atomic unit of work with a fixed duration and optional transient
workspace memory.  A tensor is produced by exactly one op, has a fixed byte
size, and is consumed by zero or more ops.  Control dependencies are ordinary
tensors of size zero.  Graphs are immutable once constructed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

TASK_RUNTIME = "runtime"
TASK_PEAK_MEMORY = "peak_memory"
TASKS = (TASK_RUNTIME, TASK_PEAK_MEMORY)

SPLITS = ("train", "valid", "test")


class GraphJsonError(ValueError):
    """Malformed graph file: bad JSON, bad schema, or failed invariants."""


def check_task(task: str) -> str:
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    return task


@dataclass(frozen=True)
class Op:
    id: str
    duration: float = 0.0
    internal_memory: int = 0


@dataclass(frozen=True)
class Tensor:
    id: str
    producer: str
    size: int = 0


@dataclass(frozen=True)
class ConsumerEdge:
    tensor: str
    op: str
    control: bool = False


class ComputationGraph:
    """Immutable DAG of ops connected by tensors.

    The derived index properties assume a valid graph; run :func:`validate`
    first on untrusted input.
    """

    def __init__(self, ops, tensors=(), consumers=()):
        self.ops: tuple[Op, ...] = tuple(ops)
        self.tensors: tuple[Tensor, ...] = tuple(tensors)
        self.consumers: tuple[ConsumerEdge, ...] = tuple(consumers)

    def __eq__(self, other):
        if not isinstance(other, ComputationGraph):
            return NotImplemented
        return (
            self.ops == other.ops
            and self.tensors == other.tensors
            and self.consumers == other.consumers
        )

    def __hash__(self):
        return hash((self.ops, self.tensors, self.consumers))

    def __repr__(self):
        return (
            f"ComputationGraph(ops={len(self.ops)}, tensors={len(self.tensors)}, "
            f"consumers={len(self.consumers)})"
        )

    @property
    def n_ops(self) -> int:
        return len(self.ops)

    @property
    def n_tensors(self) -> int:
        return len(self.tensors)

    @cached_property
    def op_index(self) -> dict[str, int]:
        return {op.id: i for i, op in enumerate(self.ops)}

    @cached_property
    def tensor_index(self) -> dict[str, int]:
        return {tensor.id: i for i, tensor in enumerate(self.tensors)}

    @cached_property
    def op_outputs(self) -> tuple[tuple[int, ...], ...]:
        """Tensor indices produced by each op, in tensor-list order."""
        out: list[list[int]] = [[] for _ in self.ops]
        for ti, tensor in enumerate(self.tensors):
            out[self.op_index[tensor.producer]].append(ti)
        return tuple(tuple(x) for x in out)

    @cached_property
    def op_inputs(self) -> tuple[tuple[int, ...], ...]:
        """Tensor indices consumed by each op, in consumer-list order."""
        inputs: list[list[int]] = [[] for _ in self.ops]
        for edge in self.consumers:
            inputs[self.op_index[edge.op]].append(self.tensor_index[edge.tensor])
        return tuple(tuple(x) for x in inputs)

    @cached_property
    def tensor_consumers(self) -> tuple[tuple[tuple[int, bool], ...], ...]:
        """(op index, is_control) pairs per tensor, in consumer-list order."""
        cons: list[list[tuple[int, bool]]] = [[] for _ in self.tensors]
        for edge in self.consumers:
            cons[self.tensor_index[edge.tensor]].append(
                (self.op_index[edge.op], edge.control)
            )
        return tuple(tuple(x) for x in cons)

    @cached_property
    def op_predecessors(self) -> tuple[tuple[int, ...], ...]:
        """Distinct producer ops feeding each op, sorted by index."""
        preds: list[set[int]] = [set() for _ in self.ops]
        for edge in self.consumers:
            producer = self.tensors[self.tensor_index[edge.tensor]].producer
            preds[self.op_index[edge.op]].add(self.op_index[producer])
        return tuple(tuple(sorted(s)) for s in preds)

    @cached_property
    def op_successors(self) -> tuple[tuple[int, ...], ...]:
        succs: list[set[int]] = [set() for _ in self.ops]
        for i, preds in enumerate(self.op_predecessors):
            for p in preds:
                succs[p].add(i)
        return tuple(tuple(sorted(s)) for s in succs)

    def topological_order(self) -> list[int]:
        """Kahn order over op indices; raises ValueError on a cycle."""
        indeg = [len(p) for p in self.op_predecessors]
        ready = [i for i, d in enumerate(indeg) if d == 0]
        order: list[int] = []
        while ready:
            v = ready.pop()
            order.append(v)
            for s in self.op_successors[v]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
        if len(order) != len(self.ops):
            raise ValueError("graph contains a dependency cycle")
        return order


def validate(graph: ComputationGraph) -> list[str]:
    """Check all graph invariants; returns one message per violation.

    An empty list means the graph is valid.  Works on arbitrary (possibly
    inconsistent) graphs, so it never touches the cached index properties.
    """
    violations: list[str] = []

    op_ids: dict[str, int] = {}
    for op in graph.ops:
        if op.id in op_ids:
            violations.append(f"duplicate op id {op.id!r}")
        else:
            op_ids[op.id] = len(op_ids)
        if op.duration < 0:
            violations.append(f"op {op.id!r} has negative duration")
        if op.internal_memory < 0:
            violations.append(f"op {op.id!r} has negative internal_memory")

    tensor_ids: dict[str, Tensor] = {}
    for tensor in graph.tensors:
        if tensor.id in tensor_ids:
            violations.append(f"duplicate tensor id {tensor.id!r}")
        else:
            tensor_ids[tensor.id] = tensor
        if tensor.size < 0:
            violations.append(f"tensor {tensor.id!r} has negative size")
        if tensor.producer not in op_ids:
            violations.append(
                f"tensor {tensor.id!r} references missing producer op {tensor.producer!r}"
            )

    seen_edges: set[tuple[str, str]] = set()
    dep_edges: list[tuple[str, str]] = []
    for edge in graph.consumers:
        key = (edge.tensor, edge.op)
        if key in seen_edges:
            violations.append(f"duplicate consumer edge ({edge.tensor!r}, {edge.op!r})")
        seen_edges.add(key)
        tensor = tensor_ids.get(edge.tensor)
        if tensor is None:
            violations.append(f"consumer edge references missing tensor {edge.tensor!r}")
        if edge.op not in op_ids:
            violations.append(f"consumer edge references missing op {edge.op!r}")
        if edge.control and tensor is not None and tensor.size != 0:
            violations.append(
                f"control edge ({edge.tensor!r}, {edge.op!r}) on tensor of nonzero size"
            )
        if tensor is not None and tensor.producer in op_ids and edge.op in op_ids:
            dep_edges.append((tensor.producer, edge.op))

    # Cycle check over the producer -> consumer relation (Kahn).
    indeg = {op_id: 0 for op_id in op_ids}
    succ: dict[str, list[str]] = {op_id: [] for op_id in op_ids}
    for a, b in dep_edges:
        indeg[b] += 1
        succ[a].append(b)
    ready = [op_id for op_id, d in indeg.items() if d == 0]
    visited = 0
    while ready:
        v = ready.pop()
        visited += 1
        for s in succ[v]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
    if visited != len(indeg):
        stuck = sorted(op_id for op_id, d in indeg.items() if d > 0)
        violations.append("dependency cycle involving ops: " + ", ".join(stuck))

    return violations


# --- JSON interchange -------------------------------------------------------
#
# One graph per UTF-8 file:
#   {"ops":       [{"id": str, "duration": float, "internal_memory": int}],
#    "tensors":   [{"id": str, "producer": str, "size": int}],
#    "consumers": [{"tensor": str, "op": str, "control": bool}]}
# Unknown keys are rejected.

_GRAPH_KEYS = ("ops", "tensors", "consumers")
_OP_KEYS = ("id", "duration", "internal_memory")
_TENSOR_KEYS = ("id", "producer", "size")
_CONSUMER_KEYS = ("tensor", "op", "control")


def _check_entry(entry, keys: tuple[str, ...], what: str) -> dict:
    if not isinstance(entry, dict):
        raise GraphJsonError(f"{what} entry must be an object")
    for key in keys:
        if key not in entry:
            raise GraphJsonError(f"{what} entry missing key {key!r}")
    for key in entry:
        if key not in keys:
            raise GraphJsonError(f"unknown key {key!r} in {what} entry")
    return entry


def _as_str(value, where: str) -> str:
    if not isinstance(value, str):
        raise GraphJsonError(f"{where} must be a string")
    return value


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise GraphJsonError(f"{where} must be an integer")
    return value


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise GraphJsonError(f"{where} must be a number")
    return float(value)


def graph_from_dict(data) -> ComputationGraph:
    if not isinstance(data, dict):
        raise GraphJsonError("graph document must be a JSON object")
    for key in _GRAPH_KEYS:
        if key not in data:
            raise GraphJsonError(f"graph document missing key {key!r}")
    for key in data:
        if key not in _GRAPH_KEYS:
            raise GraphJsonError(f"unknown key {key!r} in graph document")
    for key in _GRAPH_KEYS:
        if not isinstance(data[key], list):
            raise GraphJsonError(f"graph key {key!r} must be a list")

    ops = []
    for entry in data["ops"]:
        _check_entry(entry, _OP_KEYS, "op")
        ops.append(
            Op(
                id=_as_str(entry["id"], "op id"),
                duration=_as_number(entry["duration"], "op duration"),
                internal_memory=_as_int(entry["internal_memory"], "op internal_memory"),
            )
        )
    tensors = []
    for entry in data["tensors"]:
        _check_entry(entry, _TENSOR_KEYS, "tensor")
        tensors.append(
            Tensor(
                id=_as_str(entry["id"], "tensor id"),
                producer=_as_str(entry["producer"], "tensor producer"),
                size=_as_int(entry["size"], "tensor size"),
            )
        )
    consumers = []
    for entry in data["consumers"]:
        _check_entry(entry, _CONSUMER_KEYS, "consumer")
        control = entry["control"]
        if not isinstance(control, bool):
            raise GraphJsonError("consumer control must be a boolean")
        consumers.append(
            ConsumerEdge(
                tensor=_as_str(entry["tensor"], "consumer tensor"),
                op=_as_str(entry["op"], "consumer op"),
                control=control,
            )
        )

    graph = ComputationGraph(ops, tensors, consumers)
    violations = validate(graph)
    if violations:
        raise GraphJsonError("invalid graph: " + "; ".join(violations))
    return graph


def graph_to_dict(graph: ComputationGraph) -> dict:
    return {
        "ops": [
            {"id": op.id, "duration": op.duration, "internal_memory": op.internal_memory}
            for op in graph.ops
        ],
        "tensors": [
            {"id": t.id, "producer": t.producer, "size": t.size} for t in graph.tensors
        ],
        "consumers": [
            {"tensor": e.tensor, "op": e.op, "control": e.control}
            for e in graph.consumers
        ],
    }


def read_graph_json(path) -> ComputationGraph:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphJsonError(f"malformed JSON in {path}: {exc}") from exc
    return graph_from_dict(data)


def write_graph_json(graph: ComputationGraph, path) -> None:
    Path(path).write_text(
        json.dumps(graph_to_dict(graph), indent=1) + "\n", encoding="utf-8"
    )


# --- Dataset manifest -------------------------------------------------------
#
# A dataset is a directory of graph JSON files plus a manifest:
#   {"graphs": [{"file": str, "split": "train"|"valid"|"test",
#                "base_id": str, "family": str}]}
# base_id groups augmented copies of one base topology; all copies of a base
# graph belong to the same split.

_MANIFEST_KEYS = ("file", "split", "base_id", "family")


@dataclass(frozen=True)
class ManifestEntry:
    file: str
    split: str
    base_id: str = ""
    family: str = ""


def write_manifest(entries, path) -> None:
    doc = {
        "graphs": [
            {"file": e.file, "split": e.split, "base_id": e.base_id, "family": e.family}
            for e in entries
        ]
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def read_manifest(path) -> tuple[ManifestEntry, ...]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphJsonError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict) or "graphs" not in data:
        raise GraphJsonError("manifest must be an object with a 'graphs' key")
    entries = []
    for entry in data["graphs"]:
        _check_entry(entry, _MANIFEST_KEYS, "manifest")
        split = _as_str(entry["split"], "manifest split")
        if split not in SPLITS:
            raise GraphJsonError(f"unknown split {split!r}")
        entries.append(
            ManifestEntry(
                file=_as_str(entry["file"], "manifest file"),
                split=split,
                base_id=_as_str(entry["base_id"], "manifest base_id"),
                family=_as_str(entry["family"], "manifest family"),
            )
        )
    return tuple(entries)


def load_dataset(root) -> dict[str, list[tuple[str, ComputationGraph]]]:
    """Load every graph listed in ``root/manifest.json``, keyed by split."""
    root = Path(root)
    entries = read_manifest(root / "manifest.json")
    out: dict[str, list[tuple[str, ComputationGraph]]] = {s: [] for s in SPLITS}
    for entry in entries:
        out[entry.split].append((entry.file, read_graph_json(root / entry.file)))
    return out
