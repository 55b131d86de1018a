import numpy as np
import pytest

from graphsched.graph import ComputationGraph, ConsumerEdge, Op, Tensor


def make_chain(durations, sizes=None, op_ids=None):
    """a -> b -> c ... chain; sizes[i] is the tensor between op i and i+1."""
    n = len(durations)
    ids = op_ids or [f"op{i}" for i in range(n)]
    ops = [Op(ids[i], float(durations[i])) for i in range(n)]
    sizes = sizes if sizes is not None else [1] * (n - 1)
    tensors = [Tensor(f"t{i}", ids[i], int(sizes[i])) for i in range(n - 1)]
    consumers = [ConsumerEdge(f"t{i}", ids[i + 1]) for i in range(n - 1)]
    return ComputationGraph(ops, tensors, consumers)


def random_tiny_graph(rng: np.random.Generator, max_ops: int = 6, min_ops: int = 1):
    """Small random DAG with mixed data/control tensors and varied costs."""
    n = int(rng.integers(min_ops, max_ops + 1))
    ops = [
        Op(f"op{i}", float(rng.integers(0, 5)), int(rng.integers(0, 3)))
        for i in range(n)
    ]
    tensors = []
    consumers = []
    for i in range(n):
        for k in range(int(rng.integers(0, 3))):
            size = 0 if rng.random() < 0.15 else int(rng.integers(1, 40))
            tensors.append(Tensor(f"t{i}.{k}", f"op{i}", size))
    for tensor in tensors:
        i = int(tensor.producer[2:])
        for j in range(i + 1, n):
            if rng.random() < 0.4:
                consumers.append(
                    ConsumerEdge(tensor.id, f"op{j}", control=tensor.size == 0)
                )
    return ComputationGraph(ops, tensors, consumers)


@pytest.fixture
def chain3():
    return make_chain([1.0, 2.0, 3.0])
