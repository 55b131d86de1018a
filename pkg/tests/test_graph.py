import json

import pytest

from graphsched.graph import (
    ComputationGraph,
    ConsumerEdge,
    GraphJsonError,
    ManifestEntry,
    Op,
    Tensor,
    graph_from_dict,
    graph_to_dict,
    read_graph_json,
    read_manifest,
    validate,
    write_graph_json,
    write_manifest,
)

from conftest import make_chain, random_tiny_graph


def test_single_op_no_tensors_is_valid():
    assert validate(ComputationGraph([Op("a")])) == []


def test_two_op_cycle_detected():
    g = ComputationGraph(
        [Op("a"), Op("b")],
        [Tensor("x", "a", 1), Tensor("y", "b", 1)],
        [ConsumerEdge("x", "b"), ConsumerEdge("y", "a")],
    )
    violations = validate(g)
    assert any("cycle" in v for v in violations)
    assert any("a" in v and "b" in v for v in violations)


def test_dangling_producer_detected():
    g = ComputationGraph([Op("a")], [Tensor("x", "ghost", 1)])
    violations = validate(g)
    assert violations == ["tensor 'x' references missing producer op 'ghost'"]


def test_duplicate_op_id_detected():
    g = ComputationGraph([Op("a"), Op("a")])
    assert any("duplicate op id" in v for v in validate(g))


def test_duplicate_consumer_edge_detected():
    g = ComputationGraph(
        [Op("a"), Op("b")],
        [Tensor("x", "a", 1)],
        [ConsumerEdge("x", "b"), ConsumerEdge("x", "b")],
    )
    assert any("duplicate consumer edge" in v for v in validate(g))


def test_control_edge_requires_zero_size():
    g = ComputationGraph(
        [Op("a"), Op("b")],
        [Tensor("x", "a", 5)],
        [ConsumerEdge("x", "b", control=True)],
    )
    assert any("control edge" in v for v in validate(g))


def test_negative_costs_detected():
    g = ComputationGraph([Op("a", duration=-1.0)], [Tensor("x", "a", -2)])
    violations = validate(g)
    assert any("negative duration" in v for v in violations)
    assert any("negative size" in v for v in violations)


def test_self_loop_is_a_cycle():
    g = ComputationGraph(
        [Op("a")], [Tensor("x", "a", 1)], [ConsumerEdge("x", "a")]
    )
    assert any("cycle" in v for v in validate(g))


def test_json_round_trip(tmp_path):
    import numpy as np

    rng = np.random.default_rng(0)
    for _ in range(20):
        g = random_tiny_graph(rng)
        path = tmp_path / "g.json"
        write_graph_json(g, path)
        assert read_graph_json(path) == g


def test_missing_ops_key_rejected():
    with pytest.raises(GraphJsonError, match="'ops'"):
        graph_from_dict({"tensors": [], "consumers": []})


def test_unknown_key_rejected():
    doc = {"ops": [], "tensors": [], "consumers": [], "extra": 1}
    with pytest.raises(GraphJsonError, match="'extra'"):
        graph_from_dict(doc)


def test_unknown_entry_key_rejected():
    doc = {
        "ops": [{"id": "a", "duration": 0.0, "internal_memory": 0, "junk": 1}],
        "tensors": [],
        "consumers": [],
    }
    with pytest.raises(GraphJsonError, match="'junk'"):
        graph_from_dict(doc)


def test_duplicate_op_id_rejected_on_read():
    doc = graph_to_dict(ComputationGraph([Op("a")]))
    doc["ops"].append(dict(doc["ops"][0]))
    with pytest.raises(GraphJsonError, match="duplicate op id"):
        graph_from_dict(doc)


def test_malformed_json_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(GraphJsonError, match="malformed JSON"):
        read_graph_json(path)


def test_bool_not_accepted_as_int():
    doc = {
        "ops": [{"id": "a", "duration": 0.0, "internal_memory": True}],
        "tensors": [],
        "consumers": [],
    }
    with pytest.raises(GraphJsonError, match="integer"):
        graph_from_dict(doc)


def test_topological_order_on_chain():
    g = make_chain([1, 1, 1, 1])
    order = g.topological_order()
    assert [g.ops[i].id for i in order] == ["op0", "op1", "op2", "op3"]


def test_manifest_round_trip(tmp_path):
    entries = (
        ManifestEntry("a.json", "train", "g0", "erdos_renyi"),
        ManifestEntry("b.json", "test", "g1", "watts_strogatz"),
    )
    path = tmp_path / "manifest.json"
    write_manifest(entries, path)
    assert read_manifest(path) == entries


def test_manifest_bad_split_rejected(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(
        json.dumps({"graphs": [{"file": "a", "split": "dev", "base_id": "", "family": ""}]}),
        encoding="utf-8",
    )
    with pytest.raises(GraphJsonError, match="split"):
        read_manifest(path)
