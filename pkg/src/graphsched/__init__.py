"""graphsched: joint placement and scheduling of computation graphs.

A biased random-key genetic algorithm searches placements and schedules
against a static performance model (peak memory or makespan); a graph
network policy can predict per-node mutant-sampling distributions to steer
that search.  Heavy optional stacks (torch for the policy) are only imported
by the submodules that need them.
"""

from .graph import (
    ComputationGraph,
    ConsumerEdge,
    GraphJsonError,
    ManifestEntry,
    Op,
    TASK_PEAK_MEMORY,
    TASK_RUNTIME,
    Tensor,
    load_dataset,
    read_graph_json,
    validate,
    write_graph_json,
)
from .simulator import (
    ExecutionReport,
    Fitness,
    InvalidScheduleError,
    SimConfig,
    TransferOp,
    build_extended_graph,
    evaluate_fitness,
    simulate,
)
from .brkga import (
    BrkgaParams,
    ProposalSet,
    RunResult,
    brkga_features,
    chromosome_length,
    crossover,
    decode,
    run,
    sample_mutant,
)
from .features import AttributedMultigraph, pinned_node, to_multigraph

__version__ = "0.1.0"

__all__ = [
    "AttributedMultigraph",
    "BrkgaParams",
    "ComputationGraph",
    "ConsumerEdge",
    "ExecutionReport",
    "Fitness",
    "GraphJsonError",
    "InvalidScheduleError",
    "ManifestEntry",
    "Op",
    "ProposalSet",
    "RunResult",
    "SimConfig",
    "TASK_PEAK_MEMORY",
    "TASK_RUNTIME",
    "Tensor",
    "TransferOp",
    "brkga_features",
    "build_extended_graph",
    "chromosome_length",
    "crossover",
    "decode",
    "evaluate_fitness",
    "load_dataset",
    "pinned_node",
    "read_graph_json",
    "run",
    "sample_mutant",
    "simulate",
    "to_multigraph",
    "validate",
    "write_graph_json",
]
