import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from graphsched import rng as rngmod
from graphsched.datagen import (
    FAMILIES,
    GenSpec,
    augment,
    build_dataset,
    filter_interesting,
    generate_instance,
)
from graphsched.graph import load_dataset, read_manifest, validate
from graphsched.simulator import SimConfig

from conftest import make_chain

SMALL = GenSpec(min_ops=8, max_ops=14)
UNLIMITED = SimConfig(memory_capacity=math.inf)


def test_generated_graphs_are_valid_dags_with_source_and_sink():
    rng = rngmod.generator(0, "gen")
    for family in FAMILIES:
        for trial in range(5):
            g = generate_instance(SMALL, rngmod.generator(1, family, trial), family=family)
            assert validate(g) == []
            g.topological_order()  # raises on a cycle
            ids = [op.id for op in g.ops]
            assert ids[0] == "source" and ids[-1] == "sink"
            preds = g.op_predecessors
            succs = g.op_successors
            # unique source (no predecessors) and unique sink (no successors)
            assert [i for i in range(g.n_ops) if not preds[i]] == [0]
            assert [i for i in range(g.n_ops) if not succs[i]] == [g.n_ops - 1]


def test_source_sink_cost_free_and_control_only():
    g = generate_instance(SMALL, rngmod.generator(2, "ss"))
    source, sink = g.ops[0], g.ops[-1]
    assert source.duration == 0.0 and sink.duration == 0.0
    for t in g.tensors:
        if t.producer == "source":
            assert t.size == 0
    # every sink input is a control tensor
    for ti in g.op_inputs[g.op_index["sink"]]:
        assert g.tensors[ti].size == 0


def test_zero_output_ops_emit_only_control_edges():
    rng = rngmod.generator(3, "zero")
    found = 0
    for trial in range(20):
        g = generate_instance(SMALL, rngmod.generator(4, "z", trial))
        produced_data = {t.producer for t in g.tensors if t.size > 0}
        for edge in g.consumers:
            producer = g.tensors[g.tensor_index[edge.tensor]].producer
            if producer not in produced_data and producer not in ("source", "sink"):
                assert edge.control
                found += 1
    assert found > 0


def test_duration_matches_cost_model():
    g = generate_instance(SMALL, rngmod.generator(5, "dur"))
    size = {t.id: t.size for t in g.tensors}
    for i, op in enumerate(g.ops):
        if op.id in ("source", "sink"):
            continue
        total = sum(size[g.tensors[t].id] for t in g.op_inputs[i]) + sum(
            size[g.tensors[t].id] for t in g.op_outputs[i]
        )
        if total:
            # duration = total * (1 + r), r ~ N(0, 0.1): within a generous band
            assert 0.0 <= op.duration <= total * 2.0


def test_erdos_renyi_edge_count_expectation():
    """Mean internal edge count over many samples ~ p * C(n, 2)."""
    spec = GenSpec(family="erdos_renyi", min_ops=100, max_ops=100)
    counts = []
    for trial in range(400):
        g = generate_instance(spec, rngmod.generator(6, "er", trial))
        internal = [
            e
            for e in g.consumers
            if e.op != "sink"
            and g.tensors[g.tensor_index[e.tensor]].producer != "source"
        ]
        counts.append(len(internal))
    expected = 0.05 * 100 * 99 / 2  # 247.5
    assert abs(np.mean(counts) - expected) < 10.0


def test_chain_graph_rejected_by_filter():
    g = make_chain([5.0, 4.0, 3.0, 2.0])
    spec = GenSpec(min_ops=2, max_ops=4, filter_small_budget=100, filter_large_budget=400)
    keep, improvement = filter_interesting(g, spec, UNLIMITED, rngmod.generator(7, "f"))
    assert not keep
    assert improvement == 0.0


def test_filter_improvement_nonnegative_and_deterministic():
    spec = GenSpec(min_ops=8, max_ops=12, filter_small_budget=120, filter_large_budget=600)
    for trial in range(5):
        g = generate_instance(spec, rngmod.generator(8, "fi", trial))
        k1, i1 = filter_interesting(g, spec, UNLIMITED, rngmod.generator(9, "fi", trial))
        k2, i2 = filter_interesting(g, spec, UNLIMITED, rngmod.generator(9, "fi", trial))
        assert (k1, i1) == (k2, i2)
        assert i1 >= 0.0


def test_augment_zero_copies():
    g = generate_instance(SMALL, rngmod.generator(10, "a"))
    assert augment(g, 0, rngmod.generator(11, "a")) == [g]


def test_augment_preserves_topology_and_scales_costs():
    g = generate_instance(SMALL, rngmod.generator(12, "a"))
    copies = augment(g, 3, rngmod.generator(13, "a"))
    assert len(copies) == 4
    for copy in copies[1:]:
        assert copy.consumers == g.consumers
        assert [op.id for op in copy.ops] == [op.id for op in g.ops]
        for original, scaled in zip(g.tensors, copy.tensors):
            if original.size == 0:
                assert scaled.size == 0
            else:
                assert math.floor(0.5 * original.size) <= scaled.size <= math.ceil(1.5 * original.size)
        for original, scaled in zip(g.ops, copy.ops):
            if original.duration == 0.0:
                assert scaled.duration == 0.0
            else:
                assert 0.5 * original.duration < scaled.duration < 1.5 * original.duration


def test_build_dataset_counts_and_split_disjointness(tmp_path):
    spec = GenSpec(min_ops=6, max_ops=10)
    report = build_dataset(
        spec, counts=(10, 2, 2), copies=4, out_dir=tmp_path, seed=14, apply_filter=False
    )
    assert report.files == 70  # 14 bases x (1 + 4 copies)
    entries = read_manifest(tmp_path / "manifest.json")
    by_split = {"train": 0, "valid": 0, "test": 0}
    base_split: dict[str, str] = {}
    for e in entries:
        by_split[e.split] += 1
        assert base_split.setdefault(e.base_id, e.split) == e.split
    assert by_split == {"train": 50, "valid": 10, "test": 10}
    dataset = load_dataset(tmp_path)
    assert len(dataset["train"]) == 50


def test_build_dataset_deterministic_bytes(tmp_path):
    spec = GenSpec(min_ops=6, max_ops=9, filter_small_budget=80, filter_large_budget=240,
                   filter_threshold=0.05)

    def digest(root: Path) -> list[tuple[str, str]]:
        return sorted(
            (p.name, hashlib.md5(p.read_bytes()).hexdigest()) for p in root.iterdir()
        )

    build_dataset(spec, (2, 1, 1), copies=1, out_dir=tmp_path / "a", seed=15)
    build_dataset(spec, (2, 1, 1), copies=1, out_dir=tmp_path / "b", seed=15)
    assert digest(tmp_path / "a") == digest(tmp_path / "b")


def test_genspec_from_json_rejects_unknown_keys(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"min_ops": 5, "max_ops": 9, "bogus": 1}))
    with pytest.raises(Exception, match="bogus"):
        GenSpec.from_json(path)


def test_genspec_validation():
    with pytest.raises(ValueError):
        GenSpec(family="tree")
    with pytest.raises(ValueError):
        GenSpec(min_ops=10, max_ops=5)
