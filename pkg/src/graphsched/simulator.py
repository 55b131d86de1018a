"""Static performance model for placed, scheduled computation graphs.

Execution is simulated one schedule step per extended op (original ops plus
the transfer ops implied by the placement), in schedule order:

* a tensor becomes resident on a device when produced there or delivered by
  a transfer, and leaves immediately after its last consumer on that device
  has run; transfers count as consumers on their source device, so a
  transferred tensor is retained at the source until the transfer step;
* peak accounting is conservative: a step's outputs are allocated, and the
  running op's internal workspace counted, before the step's frees apply;
* every device carries a clock.  An op starts at max(device clock, dependency
  completions); a synchronous transfer starts at max(sender clock, receiver
  clock, producer completion), lasts latency + size / bandwidth, and advances
  both clocks.  The makespan is the largest final clock.

Tensors with no consumers anywhere stay resident on their producing device
for the rest of the simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

from .graph import (
    TASK_PEAK_MEMORY,
    TASK_RUNTIME,
    ComputationGraph,
    check_task,
)


@dataclass(frozen=True)
class SimConfig:
    """Device pool description.

    The experimental default is two homogeneous 16-GiB devices with
    zero-cost synchronous transfers (zero latency, infinite bandwidth).
    """

    devices: int = 2
    memory_capacity: float = 16 * 2**30
    transfer_latency: float = 0.0
    transfer_bandwidth: float = math.inf

    def __post_init__(self):
        if self.devices < 1:
            raise ValueError("devices must be >= 1")
        if self.transfer_latency < 0:
            raise ValueError("transfer_latency must be >= 0")
        if not self.transfer_bandwidth > 0:
            raise ValueError("transfer_bandwidth must be positive")


@dataclass(frozen=True)
class TransferOp:
    """Moves one tensor from the device where it was produced to another."""

    tensor: str
    from_device: int
    to_device: int

    @property
    def label(self) -> str:
        return f"transfer:{self.tensor}:d{self.from_device}->d{self.to_device}"


ScheduleItem = Union[str, TransferOp]


class InvalidScheduleError(ValueError):
    """Schedule does not execute: wrong item set or an op ran too early."""

    def __init__(self, message: str, op: str | None = None):
        super().__init__(message)
        self.op = op


@dataclass(frozen=True)
class ExtendedGraph:
    """Original ops plus the transfers a placement implies, with dependencies.

    Node keys are ``("op", op_id)`` and ``("xfer", tensor_id, to_device)``.
    """

    placement: dict[str, int]
    transfers: tuple[TransferOp, ...]
    predecessors: dict[tuple, tuple[tuple, ...]]
    successors: dict[tuple, tuple[tuple, ...]]


def item_key(item: ScheduleItem) -> tuple:
    if isinstance(item, TransferOp):
        return ("xfer", item.tensor, item.to_device)
    return ("op", item)


def item_label(item: ScheduleItem) -> str:
    return item.label if isinstance(item, TransferOp) else item


def build_extended_graph(
    graph: ComputationGraph, placement: Mapping[str, int]
) -> ExtendedGraph:
    """Create transfer ops and the dependency relation of the extended op set.

    A tensor with consumers on k devices other than its producer's gets
    exactly k transfers, one per destination device.  Remote consumers depend
    on the transfer for their device; local consumers depend on the producer.
    """
    for op in graph.ops:
        if op.id not in placement:
            raise ValueError(f"placement is missing op {op.id!r}")

    transfers: list[TransferOp] = []
    preds: dict[tuple, list[tuple]] = {("op", op.id): [] for op in graph.ops}
    for ti, tensor in enumerate(graph.tensors):
        src_dev = placement[tensor.producer]
        remote = sorted(
            {
                placement[graph.ops[ci].id]
                for ci, _control in graph.tensor_consumers[ti]
                if placement[graph.ops[ci].id] != src_dev
            }
        )
        for dst in remote:
            xfer = TransferOp(tensor.id, src_dev, dst)
            transfers.append(xfer)
            preds[item_key(xfer)] = [("op", tensor.producer)]
        for ci, _control in graph.tensor_consumers[ti]:
            consumer = graph.ops[ci].id
            dev = placement[consumer]
            if dev == src_dev:
                preds[("op", consumer)].append(("op", tensor.producer))
            else:
                preds[("op", consumer)].append(("xfer", tensor.id, dev))

    succs: dict[tuple, list[tuple]] = {k: [] for k in preds}
    for node, ps in preds.items():
        for p in ps:
            succs[p].append(node)
    return ExtendedGraph(
        placement=dict(placement),
        transfers=tuple(transfers),
        predecessors={k: tuple(v) for k, v in preds.items()},
        successors={k: tuple(v) for k, v in succs.items()},
    )


@dataclass(frozen=True)
class TraceStep:
    """State snapshot at one schedule step.

    ``resident`` and ``usage`` are taken at the peak-accounting point (after
    the step's allocations, before its frees); ``mem_after`` is the resident
    total per device once the step's frees have been applied.
    """

    step: int
    item: str
    devices: tuple[int, ...]
    start: float
    finish: float
    resident: tuple[tuple[str, ...], ...]
    usage: tuple[int, ...]
    mem_after: tuple[int, ...]


@dataclass(frozen=True)
class ExecutionReport:
    per_device_peak: tuple[int, ...]
    peak_memory: int
    makespan: float
    feasible: bool
    trace: tuple[TraceStep, ...] | None = None


@dataclass(frozen=True)
class Fitness:
    """Totally ordered solution quality: feasible beats infeasible, then
    lower objective beats higher.  ``sorted`` puts the best first."""

    feasible: bool
    objective: float

    def key(self) -> tuple[int, float]:
        return (0 if self.feasible else 1, self.objective)

    def __lt__(self, other: "Fitness") -> bool:
        return self.key() < other.key()

    def better_than(self, other: "Fitness") -> bool:
        return self.key() < other.key()


def simulate(
    graph: ComputationGraph,
    placement: Mapping[str, int],
    schedule: Sequence[ScheduleItem],
    config: SimConfig,
    record_trace: bool = True,
) -> ExecutionReport:
    """Run the performance model over a full schedule.

    Raises :class:`InvalidScheduleError` when the schedule is not a valid
    total order of the extended op set, or when an op runs before one of its
    inputs is resident on its device.
    """
    d = config.devices
    for op_id, dev in placement.items():
        if not 0 <= dev < d:
            raise ValueError(f"op {op_id!r} placed on device {dev}, have {d}")
    ext = build_extended_graph(graph, placement)

    expected = {("op", op.id) for op in graph.ops} | {item_key(x) for x in ext.transfers}
    seen: set[tuple] = set()
    for item in schedule:
        key = item_key(item)
        if key in seen:
            raise InvalidScheduleError(f"duplicate schedule item {item_label(item)!r}")
        if key not in expected:
            raise InvalidScheduleError(f"unexpected schedule item {item_label(item)!r}")
        if isinstance(item, TransferOp) and item.from_device != placement[
            graph.tensors[graph.tensor_index[item.tensor]].producer
        ]:
            raise InvalidScheduleError(
                f"transfer {item.label!r} does not originate at the producer's device"
            )
        seen.add(key)
    if seen != expected:
        missing = sorted(str(k) for k in expected - seen)
        raise InvalidScheduleError(f"schedule is missing items: {', '.join(missing)}")

    # Per-tensor consumer counts per device, plus outbound transfer counts.
    cons_count = [[0] * d for _ in graph.tensors]
    for ti in range(graph.n_tensors):
        for ci, _control in graph.tensor_consumers[ti]:
            cons_count[ti][placement[graph.ops[ci].id]] += 1
    xfer_count = [0] * graph.n_tensors
    for x in ext.transfers:
        xfer_count[graph.tensor_index[x.tensor]] += 1

    resident: list[dict[int, int]] = [dict() for _ in range(d)]
    remaining: list[dict[int, int]] = [dict() for _ in range(d)]
    mem = [0] * d
    peak = [0] * d
    clocks = [0.0] * d
    completion: dict[tuple, float] = {}
    trace: list[TraceStep] = []
    bw_inv = 0.0 if math.isinf(config.transfer_bandwidth) else 1.0 / config.transfer_bandwidth

    def free_if_dead(ti: int, dev: int) -> None:
        remaining[dev][ti] -= 1
        if remaining[dev][ti] == 0:
            mem[dev] -= graph.tensors[ti].size
            del resident[dev][ti]
            del remaining[dev][ti]

    for step, item in enumerate(schedule):
        key = item_key(item)
        start = 0.0
        for p in ext.predecessors[key]:
            if p not in completion:
                raise InvalidScheduleError(
                    f"{item_label(item)!r} scheduled before its dependency ran",
                    op=item_label(item),
                )
            start = max(start, completion[p])

        if isinstance(item, TransferOp):
            ti = graph.tensor_index[item.tensor]
            src, dst = item.from_device, item.to_device
            if ti not in resident[src]:
                raise InvalidScheduleError(
                    f"transfer of {item.tensor!r} before it is resident on device {src}",
                    op=item.label,
                )
            size = graph.tensors[ti].size
            resident[dst][ti] = size
            remaining[dst][ti] = cons_count[ti][dst]
            mem[dst] += size
            usage = tuple(mem)
            peak[src] = max(peak[src], mem[src])
            peak[dst] = max(peak[dst], mem[dst])
            start = max(start, clocks[src], clocks[dst])
            finish = start + config.transfer_latency + size * bw_inv
            clocks[src] = finish
            clocks[dst] = finish
            devices = (src, dst)
            snapshot = _snapshot(graph, resident) if record_trace else None
            free_if_dead(ti, src)
        else:
            op = graph.ops[graph.op_index[item]]
            dev = placement[item]
            for ti in graph.op_inputs[graph.op_index[item]]:
                if ti not in resident[dev]:
                    raise InvalidScheduleError(
                        f"op {item!r} scheduled before input tensor "
                        f"{graph.tensors[ti].id!r} is resident on device {dev}",
                        op=item,
                    )
            for ti in graph.op_outputs[graph.op_index[item]]:
                size = graph.tensors[ti].size
                resident[dev][ti] = size
                remaining[dev][ti] = cons_count[ti][dev] + xfer_count[ti]
                mem[dev] += size
            usage = tuple(
                mem[k] + (op.internal_memory if k == dev else 0) for k in range(d)
            )
            peak[dev] = max(peak[dev], mem[dev] + op.internal_memory)
            start = max(start, clocks[dev])
            finish = start + op.duration
            clocks[dev] = finish
            devices = (dev,)
            snapshot = _snapshot(graph, resident) if record_trace else None
            for ti in graph.op_inputs[graph.op_index[item]]:
                free_if_dead(ti, dev)

        completion[key] = finish
        if record_trace:
            trace.append(
                TraceStep(
                    step=step,
                    item=item_label(item),
                    devices=devices,
                    start=start,
                    finish=finish,
                    resident=snapshot,
                    usage=usage,
                    mem_after=tuple(mem),
                )
            )

    feasible = all(p <= config.memory_capacity for p in peak)
    return ExecutionReport(
        per_device_peak=tuple(peak),
        peak_memory=max(peak) if peak else 0,
        makespan=max(clocks) if clocks else 0.0,
        feasible=feasible,
        trace=tuple(trace) if record_trace else None,
    )


def _snapshot(graph: ComputationGraph, resident) -> tuple[tuple[str, ...], ...]:
    return tuple(
        tuple(sorted(graph.tensors[ti].id for ti in dev_resident))
        for dev_resident in resident
    )


def evaluate_fitness(
    graph: ComputationGraph,
    placement: Mapping[str, int],
    schedule: Sequence[ScheduleItem],
    config: SimConfig,
    task: str,
) -> Fitness:
    """Fitness of a solution under the given objective.

    Peak-memory task: the objective is the peak and every solution is in the
    feasible class.  Runtime task: feasible solutions score their makespan;
    solutions exceeding any device's capacity fall in the infeasible class
    and score the total excess bytes (lower is still better).
    """
    check_task(task)
    report = simulate(graph, placement, schedule, config, record_trace=False)
    if task == TASK_PEAK_MEMORY:
        return Fitness(feasible=True, objective=float(report.peak_memory))
    excess = sum(
        max(0.0, p - config.memory_capacity) for p in report.per_device_peak
    )
    if excess > 0:
        return Fitness(feasible=False, objective=float(excess))
    return Fitness(feasible=True, objective=report.makespan)


def trace_events(report: ExecutionReport) -> list[dict]:
    """Flatten a trace into JSON-ready events: one row per touched device."""
    if report.trace is None:
        raise ValueError("report has no trace; simulate with record_trace=True")
    events = []
    for ts in report.trace:
        for dev in ts.devices:
            events.append(
                {"step": ts.step, "device": dev, "op": ts.item, "mem_after": ts.mem_after[dev]}
            )
    return events
