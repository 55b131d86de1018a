"""Biased random-key genetic algorithm over placement/schedule chromosomes.

Chromosome layout for a graph with o ops and t tensors on d devices
(every entry lies in [0, 1]):

    [0, o*d)            op-to-device affinities, op-major
    [o*d, o*d + o)      op scheduling priorities
    [o*d + o, n)        (tensor, device) transfer priorities

Decoding places each op on its argmax-affinity device (ties to the lowest
device index; a pinned op is forced onto device 0), creates the transfers the
placement implies, and schedules the extended graph by priority-driven
topological sort: among ready nodes the highest gene wins, original ops use
their scheduling gene, transfers the gene of their (tensor, destination)
pair, and exact ties fall to the lower extended index.  Every chromosome
decodes to a valid solution; there is no repair step.

Mutants are drawn from per-gene beta distributions, the "proposal set".
``ProposalSet.uniform`` (all Beta(1, 1)) recovers the classic uniform
mutation; a learned policy supplies non-uniform parameters per gene.
"""

from __future__ import annotations

import heapq
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import kernel
from .features import pinned_node
from .graph import ComputationGraph, check_task
from .simulator import (
    Fitness,
    ScheduleItem,
    SimConfig,
    build_extended_graph,
    evaluate_fitness,
    item_key,
)

FitnessKey = tuple[int, float]

_total_calls = 0
_total_calls_lock = threading.Lock()


def total_fitness_calls() -> int:
    """Process-wide count of fitness evaluations, for budget audits."""
    return _total_calls


def _count_calls(n: int) -> None:
    global _total_calls
    with _total_calls_lock:
        _total_calls += n


def chromosome_length(graph: ComputationGraph, devices: int) -> int:
    o, t = graph.n_ops, graph.n_tensors
    return o * devices + o + t * devices


@dataclass(frozen=True)
class ProposalSet:
    """Per-gene Beta(alpha, beta) mutant-sampling parameters."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.float64)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        if alpha.shape != beta.shape or alpha.ndim != 1:
            raise ValueError("alpha and beta must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise ValueError("beta parameters must be finite")
        if np.any(alpha <= 0) or np.any(beta <= 0):
            raise ValueError("beta parameters must be positive")

    def __len__(self) -> int:
        return self.alpha.shape[0]

    @classmethod
    def uniform(cls, n: int) -> "ProposalSet":
        return cls(np.ones(n), np.ones(n))


@dataclass(frozen=True)
class BrkgaParams:
    """Evolution hyperparameters; defaults sit mid-range of the usual
    recommendations (population 100, 15% elites, 70% children, bias 0.7)."""

    population: int = 100
    elites: int = 15
    children: int = 70
    elite_bias: float = 0.7
    populations: int = 1
    budget: int = 5000

    def __post_init__(self):
        if self.population < 1:
            raise ValueError("population must be >= 1")
        if self.elites < 1:
            raise ValueError("elites must be >= 1")
        if self.children < 0:
            raise ValueError("children must be >= 0")
        if self.elites + self.children > self.population:
            raise ValueError("elites + children must not exceed population")
        if self.children > 0 and self.elites >= self.population:
            raise ValueError("crossover needs at least one nonelite")
        if not 0.5 <= self.elite_bias < 1.0:
            raise ValueError("elite_bias must lie in [0.5, 1.0)")
        if self.populations < 1:
            raise ValueError("populations must be >= 1")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")

    @property
    def mutants(self) -> int:
        return self.population - self.elites - self.children


def sample_mutant(proposals: ProposalSet, rng: np.random.Generator) -> np.ndarray:
    """One chromosome with gene i ~ Beta(alpha_i, beta_i), independent."""
    return rng.beta(proposals.alpha, proposals.beta)


def crossover(
    elite: np.ndarray, nonelite: np.ndarray, elite_bias: float, rng: np.random.Generator
) -> np.ndarray:
    """Gene-wise parametrized crossover: each entry comes from the elite
    parent with probability ``elite_bias``, else from the nonelite."""
    if elite.shape != nonelite.shape:
        raise ValueError("parents must have equal length")
    if not 0.5 <= elite_bias <= 1.0:
        raise ValueError("elite_bias must lie in [0.5, 1.0]")
    mask = rng.random(elite.shape[0]) < elite_bias
    return np.where(mask, elite, nonelite)


def decode(
    chromosome: np.ndarray,
    graph: ComputationGraph,
    config: SimConfig,
    pinned_op: str | None = None,
) -> tuple[dict[str, int], list[ScheduleItem]]:
    """Pure-python reference decoder; mirrors the compiled kernel exactly."""
    o, t, d = graph.n_ops, graph.n_tensors, config.devices
    n = chromosome_length(graph, d)
    if chromosome.shape != (n,):
        raise ValueError(f"chromosome must have shape ({n},), got {chromosome.shape}")

    affinities = np.asarray(chromosome[: o * d]).reshape(o, d)
    devices = np.argmax(affinities, axis=1)
    if pinned_op is not None:
        devices[graph.op_index[pinned_op]] = 0
    placement = {op.id: int(devices[i]) for i, op in enumerate(graph.ops)}

    ext = build_extended_graph(graph, placement)
    # Extended indices: ops 0..o-1, then transfers in (tensor, dst) order --
    # build_extended_graph emits them in exactly that order.
    node_index: dict[tuple, int] = {("op", op.id): i for i, op in enumerate(graph.ops)}
    priority: dict[tuple, float] = {
        ("op", op.id): float(chromosome[o * d + i]) for i, op in enumerate(graph.ops)
    }
    items: dict[tuple, ScheduleItem] = {("op", op.id): op.id for op in graph.ops}
    for j, xfer in enumerate(ext.transfers):
        key = item_key(xfer)
        node_index[key] = o + j
        ti = graph.tensor_index[xfer.tensor]
        priority[key] = float(chromosome[o * d + o + ti * d + xfer.to_device])
        items[key] = xfer

    indeg = {k: len(ps) for k, ps in ext.predecessors.items()}
    heap = [
        (-priority[k], node_index[k], k) for k, deg in indeg.items() if deg == 0
    ]
    heapq.heapify(heap)
    schedule: list[ScheduleItem] = []
    while heap:
        _negp, _idx, key = heapq.heappop(heap)
        schedule.append(items[key])
        for succ in ext.successors[key]:
            indeg[succ] -= 1
            if indeg[succ] == 0:
                heapq.heappush(heap, (-priority[succ], node_index[succ], succ))
    if len(schedule) != len(indeg):
        raise ValueError("extended graph contains a cycle")
    return placement, schedule


class FitnessEvaluator:
    """Chromosome -> fitness key with an exact call counter.

    Uses the compiled kernel when available, else decode + simulate.  Both
    paths are pure functions of the chromosome, so evaluations may run on
    worker threads without affecting results.
    """

    def __init__(
        self,
        graph: ComputationGraph,
        task: str,
        config: SimConfig,
        pinned_op: str | None = None,
        use_kernel: bool | None = None,
    ):
        check_task(task)
        self.graph = graph
        self.task = task
        self.config = config
        self.pinned_op = pinned_op
        self.calls = 0
        self._use_kernel = kernel.AVAILABLE if use_kernel is None else use_kernel
        if self._use_kernel:
            self._arrays = kernel.build_arrays(graph)
            self._pinned_idx = -1 if pinned_op is None else graph.op_index[pinned_op]
            self._bw_inv = (
                0.0
                if np.isinf(config.transfer_bandwidth)
                else 1.0 / config.transfer_bandwidth
            )
            self._task_code = (
                kernel.TASK_CODE_RUNTIME
                if task == "runtime"
                else kernel.TASK_CODE_PEAK_MEMORY
            )

    def _evaluate(self, chromosome: np.ndarray) -> FitnessKey:
        if self._use_kernel:
            a = self._arrays
            cls, obj = kernel._evaluate_chromosome(
                np.ascontiguousarray(chromosome, dtype=np.float64),
                self.config.devices,
                a.o,
                a.t,
                self._pinned_idx,
                a.duration,
                a.internal,
                a.size,
                a.producer,
                a.cons_indptr,
                a.cons_op,
                a.in_indptr,
                a.in_tensor,
                a.out_indptr,
                a.out_tensor,
                self.config.transfer_latency,
                self._bw_inv,
                float(self.config.memory_capacity),
                self._task_code,
            )
            return (int(cls), float(obj))
        placement, schedule = decode(chromosome, self.graph, self.config, self.pinned_op)
        fit = evaluate_fitness(self.graph, placement, schedule, self.config, self.task)
        return fit.key()

    def __call__(self, chromosome: np.ndarray) -> FitnessKey:
        self.calls += 1
        _count_calls(1)
        return self._evaluate(chromosome)

    def evaluate_many(self, chromosomes, workers: int = 1) -> list[FitnessKey]:
        self.calls += len(chromosomes)
        _count_calls(len(chromosomes))
        if workers > 1 and len(chromosomes) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(self._evaluate, chromosomes))
        return [self._evaluate(c) for c in chromosomes]


@dataclass
class Population:
    chromosomes: list[np.ndarray]
    fitness: list[FitnessKey]


@dataclass
class GenerationOutcome:
    population: Population
    evaluations: int
    completed: bool
    best_seen: tuple[FitnessKey, np.ndarray] | None


def evolve_generation(
    population: Population,
    proposals: ProposalSet,
    evaluator: FitnessEvaluator,
    params: BrkgaParams,
    rng: np.random.Generator,
    max_evaluations: int | None = None,
    workers: int = 1,
) -> GenerationOutcome:
    """One evolution step: elites survive unmodified, children come from one
    random elite crossed with one random nonelite, and fresh mutants fill the
    rest.  Only new chromosomes cost fitness calls.

    If ``max_evaluations`` truncates the step, the partial generation is
    discarded (the old population stands) but the evaluated chromosomes are
    still counted and the best of them reported.
    """
    order = sorted(range(len(population.chromosomes)), key=lambda i: population.fitness[i])
    n_e = min(params.elites, len(order))
    elite_idx = order[:n_e]
    nonelite_idx = order[n_e:]

    new_chromosomes: list[np.ndarray] = []
    if params.children > 0 and nonelite_idx:
        e_sel = rng.integers(0, len(elite_idx), size=params.children)
        ne_sel = rng.integers(0, len(nonelite_idx), size=params.children)
        masks = rng.random((params.children, len(proposals)))
        for c in range(params.children):
            elite = population.chromosomes[elite_idx[e_sel[c]]]
            nonelite = population.chromosomes[nonelite_idx[ne_sel[c]]]
            new_chromosomes.append(
                np.where(masks[c] < params.elite_bias, elite, nonelite)
            )
    if params.mutants > 0:
        block = rng.beta(proposals.alpha, proposals.beta, size=(params.mutants, len(proposals)))
        for m in range(params.mutants):
            new_chromosomes.append(block[m])

    take = len(new_chromosomes)
    if max_evaluations is not None:
        take = min(take, max_evaluations)
    keys = evaluator.evaluate_many(new_chromosomes[:take], workers=workers)

    best_seen = None
    for key, chrom in zip(keys, new_chromosomes):
        if best_seen is None or key < best_seen[0]:
            best_seen = (key, chrom)

    if take < len(new_chromosomes):
        return GenerationOutcome(population, take, False, best_seen)

    next_chroms = [population.chromosomes[i] for i in elite_idx] + new_chromosomes
    next_fitness = [population.fitness[i] for i in elite_idx] + keys
    return GenerationOutcome(Population(next_chroms, next_fitness), take, True, best_seen)


@dataclass
class RunResult:
    best_chromosome: np.ndarray
    best_fitness: Fitness
    placement: dict[str, int]
    schedule: list[ScheduleItem]
    evaluations: int
    history: list[Fitness]
    final_population: list[np.ndarray] | None = None


def run(
    graph: ComputationGraph,
    task: str,
    config: SimConfig,
    proposals: ProposalSet,
    params: BrkgaParams,
    rng: np.random.Generator,
    workers: int = 1,
    keep_population: bool = False,
    evaluator: FitnessEvaluator | None = None,
) -> RunResult:
    """Evolve until the fitness-call budget is spent; returns the best found.

    The budget is consumed exactly: the initial population(s) and every
    completed generation count in full, and a final partial generation is
    evaluated up to the cap (its survivors are discarded but its best still
    updates the result).  Evaluation order is budget-independent, so runs
    with the same seed and nested budgets share an evaluation prefix.
    """
    check_task(task)
    n = chromosome_length(graph, config.devices)
    if len(proposals) != n:
        raise ValueError(f"proposals length {len(proposals)} != chromosome length {n}")
    pinned = pinned_node(graph, task)
    if evaluator is None:
        evaluator = FitnessEvaluator(graph, task, config, pinned_op=pinned)
    budget = params.budget
    used = 0
    best_key: FitnessKey | None = None
    best_chrom: np.ndarray | None = None
    history_keys: list[FitnessKey] = []

    populations: list[Population] = []
    for _p in range(params.populations):
        chroms = rng.beta(proposals.alpha, proposals.beta, size=(params.population, n))
        chrom_list = [chroms[i] for i in range(params.population)]
        take = min(params.population, budget - used)
        keys = evaluator.evaluate_many(chrom_list[:take], workers=workers)
        used += take
        for key, chrom in zip(keys, chrom_list):
            if best_key is None or key < best_key:
                best_key, best_chrom = key, chrom
        populations.append(Population(chrom_list[:take], keys))
        if used >= budget:
            break
    history_keys.append(best_key)

    new_per_generation = params.children + params.mutants
    while used < budget and new_per_generation > 0:
        completed_round = True
        for p, population in enumerate(populations):
            if used >= budget:
                completed_round = False
                break
            outcome = evolve_generation(
                population,
                proposals,
                evaluator,
                params,
                rng,
                max_evaluations=budget - used,
                workers=workers,
            )
            used += outcome.evaluations
            if outcome.best_seen is not None and (
                best_key is None or outcome.best_seen[0] < best_key
            ):
                best_key, best_chrom = outcome.best_seen
            if not outcome.completed:
                completed_round = False
                break
            populations[p] = outcome.population
        if completed_round:
            history_keys.append(best_key)

    placement, schedule = decode(best_chrom, graph, config, pinned)
    final_population = None
    if keep_population:
        final_population = [c for pop in populations for c in pop.chromosomes]
    return RunResult(
        best_chromosome=best_chrom,
        best_fitness=Fitness(feasible=best_key[0] == 0, objective=best_key[1]),
        placement=placement,
        schedule=schedule,
        evaluations=used,
        history=[Fitness(feasible=k[0] == 0, objective=k[1]) for k in history_keys],
        final_population=final_population,
    )


def decode_placement_positions(
    chromosome: np.ndarray,
    graph: ComputationGraph,
    config: SimConfig,
    pinned_op: str | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Placement vector and normalized schedule position per op (first
    original op scheduled = 0, last = 1; 0 for single-op graphs)."""
    if kernel.AVAILABLE:
        arrays = kernel.build_arrays(graph)
        pinned_idx = -1 if pinned_op is None else graph.op_index[pinned_op]
        place, pos = kernel._decode_placement_positions(
            np.ascontiguousarray(chromosome, dtype=np.float64),
            config.devices,
            arrays.o,
            arrays.t,
            pinned_idx,
            arrays.producer,
            arrays.cons_indptr,
            arrays.cons_op,
        )
        return np.asarray(place), np.asarray(pos)
    placement, schedule = decode(chromosome, graph, config, pinned_op)
    place = np.array([placement[op.id] for op in graph.ops], dtype=np.int32)
    pos = np.zeros(graph.n_ops, dtype=np.float64)
    rank = 0
    for item in schedule:
        if isinstance(item, str):
            pos[graph.op_index[item]] = rank
            rank += 1
    if graph.n_ops > 1:
        pos /= graph.n_ops - 1
    return place, pos


def brkga_features(
    graph: ComputationGraph,
    task: str,
    config: SimConfig,
    rng: np.random.Generator,
    budget: int = 400,
    params: BrkgaParams | None = None,
) -> np.ndarray:
    """Search-based node features: run a short uniform-proposal evolution and
    aggregate the final population's decoded solutions into, per op, the
    occupancy frequency of each device and the mean normalized schedule
    position.  Returns an (n_ops, devices + 1) array.
    """
    if params is None:
        params = BrkgaParams(budget=budget)
    else:
        params = replace(params, budget=budget)
    n = chromosome_length(graph, config.devices)
    result = run(
        graph,
        task,
        config,
        ProposalSet.uniform(n),
        params,
        rng,
        keep_population=True,
    )
    pinned = pinned_node(graph, task)
    o, d = graph.n_ops, config.devices
    occupancy = np.zeros((o, d), dtype=np.float64)
    position = np.zeros(o, dtype=np.float64)
    chroms = result.final_population
    for chrom in chroms:
        place, pos = decode_placement_positions(chrom, graph, config, pinned)
        for i in range(o):
            occupancy[i, place[i]] += 1.0
        position += pos
    m = len(chroms)
    return np.column_stack([occupancy / m, position / m])
