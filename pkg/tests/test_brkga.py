import numpy as np
import pytest

from graphsched import rng as rngmod
from graphsched.brkga import (
    BrkgaParams,
    FitnessEvaluator,
    ProposalSet,
    brkga_features,
    chromosome_length,
    crossover,
    decode,
    run,
    sample_mutant,
)
from graphsched.features import pinned_node
from graphsched.graph import ComputationGraph, ConsumerEdge, Op, Tensor
from graphsched.simulator import SimConfig, TransferOp, simulate

from conftest import make_chain, random_tiny_graph

CFG = SimConfig()


def worked_example():
    """Three ops, three tensors, two devices: 1 -> (A, C) -> 2 -> (B) -> 3."""
    ops = [Op("1", 1.0), Op("2", 1.0), Op("3", 1.0)]
    tensors = [Tensor("A", "1", 4), Tensor("B", "2", 4), Tensor("C", "1", 4)]
    consumers = [ConsumerEdge("A", "2"), ConsumerEdge("C", "2"), ConsumerEdge("B", "3")]
    return ComputationGraph(ops, tensors, consumers)


def test_decode_worked_example():
    g = worked_example()
    o, t, d = 3, 3, 2
    chrom = np.zeros(o * d + o + t * d)
    chrom[0:2] = [0.9, 0.1]  # op 1 -> device 0
    chrom[2:4] = [0.2, 0.8]  # op 2 -> device 1
    chrom[4:6] = [0.7, 0.3]  # op 3 -> device 0
    chrom[6:9] = [0.9, 0.5, 0.4]  # scheduling priorities
    # transfer genes: tensor A low, tensor C high for device 1
    chrom[9:15] = [0.0, 0.3, 0.0, 0.0, 0.0, 0.6]
    placement, schedule = decode(chrom, g, CFG, pinned_op="1")
    assert placement == {"1": 0, "2": 1, "3": 0}
    assert schedule == [
        "1",
        TransferOp("C", 0, 1),  # C transfers before A: higher priority gene
        TransferOp("A", 0, 1),
        "2",
        TransferOp("B", 1, 0),
        "3",
    ]
    ops_only = [s for s in schedule if isinstance(s, str)]
    assert ops_only == ["1", "2", "3"]


def test_decode_equal_affinities_tie_to_device_zero():
    g = worked_example()
    chrom = np.full(chromosome_length(g, 2), 0.5)
    placement, _schedule = decode(chrom, g, CFG)
    assert set(placement.values()) == {0}


def test_decode_always_valid():
    rng = np.random.default_rng(0)
    for _ in range(50):
        g = random_tiny_graph(rng)
        chrom = rng.random(chromosome_length(g, 2))
        pinned = pinned_node(g, "runtime")
        placement, schedule = decode(chrom, g, CFG, pinned)
        simulate(g, placement, schedule, CFG)  # raises if invalid
        assert placement[pinned] == 0


def test_sample_mutant_uniform_moments():
    rng = rngmod.generator(0, "moments")
    proposals = ProposalSet.uniform(1)
    draws = np.array([sample_mutant(proposals, rng)[0] for _ in range(100_000)])
    assert abs(draws.mean() - 0.5) < 0.01
    assert abs(draws.var() - 1.0 / 12.0) < 0.005


def test_sample_mutant_beta_mean():
    rng = rngmod.generator(0, "beta")
    proposals = ProposalSet(np.array([1.529412]), np.array([1.720588]))
    draws = np.array([sample_mutant(proposals, rng)[0] for _ in range(100_000)])
    assert abs(draws.mean() - 8.0 / 17.0) < 0.01


def test_sample_mutant_deterministic():
    proposals = ProposalSet.uniform(5)
    a = sample_mutant(proposals, rngmod.generator(1, "x"))
    b = sample_mutant(proposals, rngmod.generator(1, "x"))
    assert np.array_equal(a, b)


def test_proposals_reject_bad_parameters():
    with pytest.raises(ValueError):
        ProposalSet(np.array([0.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        ProposalSet(np.array([np.inf]), np.array([1.0]))


def test_crossover_rho_one_copies_elite():
    rng = rngmod.generator(2, "c")
    elite = rng.random(50)
    nonelite = rng.random(50)
    child = crossover(elite, nonelite, 1.0, rngmod.generator(3, "c"))
    assert np.array_equal(child, elite)


def test_crossover_inheritance_fraction():
    n = 100_000
    elite = np.zeros(n)
    nonelite = np.ones(n)
    child = crossover(elite, nonelite, 0.7, rngmod.generator(4, "c"))
    assert abs(np.mean(child == 0.0) - 0.7) < 0.01


def test_crossover_identical_parents():
    parent = rngmod.generator(5, "c").random(30)
    child = crossover(parent, parent.copy(), 0.6, rngmod.generator(6, "c"))
    assert np.array_equal(child, parent)


def test_params_validation():
    with pytest.raises(ValueError):
        BrkgaParams(population=10, elites=5, children=6)
    with pytest.raises(ValueError):
        BrkgaParams(elite_bias=1.0)
    with pytest.raises(ValueError):
        BrkgaParams(elites=0)
    assert BrkgaParams(population=4, elites=1, children=2).mutants == 1


def test_run_budget_exactly_consumed():
    rng = np.random.default_rng(7)
    for budget in (37, 100, 215, 400):
        g = random_tiny_graph(np.random.default_rng(11), min_ops=3)
        n = chromosome_length(g, 2)
        res = run(
            g, "runtime", CFG, ProposalSet.uniform(n),
            BrkgaParams(population=20, elites=3, children=12, budget=budget),
            rngmod.generator(8, "b", budget),
        )
        assert res.evaluations == budget


def test_run_deterministic():
    g = random_tiny_graph(np.random.default_rng(12), min_ops=3)
    n = chromosome_length(g, 2)
    params = BrkgaParams(population=15, elites=2, children=9, budget=120)
    r1 = run(g, "runtime", CFG, ProposalSet.uniform(n), params, rngmod.generator(9, "d"))
    r2 = run(g, "runtime", CFG, ProposalSet.uniform(n), params, rngmod.generator(9, "d"))
    assert np.array_equal(r1.best_chromosome, r2.best_chromosome)
    assert r1.best_fitness == r2.best_fitness
    assert [f.objective for f in r1.history] == [f.objective for f in r2.history]


def test_run_parallel_matches_serial():
    g = random_tiny_graph(np.random.default_rng(13), min_ops=4)
    n = chromosome_length(g, 2)
    params = BrkgaParams(population=15, elites=2, children=9, budget=150)
    r1 = run(g, "runtime", CFG, ProposalSet.uniform(n), params, rngmod.generator(10, "p"), workers=1)
    r2 = run(g, "runtime", CFG, ProposalSet.uniform(n), params, rngmod.generator(10, "p"), workers=4)
    assert np.array_equal(r1.best_chromosome, r2.best_chromosome)
    assert [f.objective for f in r1.history] == [f.objective for f in r2.history]


def test_history_monotone_non_worsening():
    rng = np.random.default_rng(14)
    for trial in range(20):
        g = random_tiny_graph(rng, min_ops=2)
        n = chromosome_length(g, 2)
        res = run(
            g, "runtime" if trial % 2 else "peak_memory", CFG, ProposalSet.uniform(n),
            BrkgaParams(population=10, elites=2, children=5, budget=100),
            rngmod.generator(15, "m", trial),
        )
        keys = [f.key() for f in res.history]
        assert all(b <= a for a, b in zip(keys, keys[1:]))


def test_nested_budget_prefix_property():
    g = random_tiny_graph(np.random.default_rng(16), min_ops=4)
    n = chromosome_length(g, 2)
    objectives = []
    for budget in (60, 120, 240):
        res = run(
            g, "runtime", CFG, ProposalSet.uniform(n),
            BrkgaParams(population=12, elites=2, children=7, budget=budget),
            rngmod.generator(17, "nested"),
        )
        objectives.append(res.best_fitness.key())
    assert objectives[0] >= objectives[1] >= objectives[2]


def test_budget_equals_population_is_pure_sampling():
    """One initial population only: no generation can start."""
    g = random_tiny_graph(np.random.default_rng(18), min_ops=3)
    n = chromosome_length(g, 2)
    params = BrkgaParams(population=30, elites=3, children=20, budget=30)
    res = run(g, "runtime", CFG, ProposalSet.uniform(n), params, rngmod.generator(19, "i"))
    assert res.evaluations == 30
    assert len(res.history) == 1


def test_multi_population_budget_and_best():
    g = random_tiny_graph(np.random.default_rng(20), min_ops=3)
    n = chromosome_length(g, 2)
    params = BrkgaParams(population=10, elites=2, children=5, populations=3, budget=200)
    res = run(g, "runtime", CFG, ProposalSet.uniform(n), params, rngmod.generator(21, "mp"))
    assert res.evaluations == 200


def test_brkga_features_single_op_pinned():
    g = ComputationGraph([Op("only", 2.0)])
    feats = brkga_features(g, "runtime", CFG, rngmod.generator(22, "f"), budget=50)
    assert feats.shape == (1, 3)
    assert feats[0, 0] == 1.0  # always on device 0
    assert feats[0, 1] == 0.0
    assert feats[0, 2] == 0.0


def test_brkga_features_occupancy_sums_to_one():
    g = random_tiny_graph(np.random.default_rng(23), min_ops=4)
    feats = brkga_features(g, "runtime", CFG, rngmod.generator(24, "f"), budget=150)
    assert np.allclose(feats[:, 0] + feats[:, 1], 1.0)
    assert np.all(feats[:, 2] >= 0.0) and np.all(feats[:, 2] <= 1.0)


def test_brkga_features_chain_positions_ordered():
    g = make_chain([1.0, 1.0, 1.0])
    feats = brkga_features(g, "runtime", CFG, rngmod.generator(25, "f"), budget=150)
    assert feats[0, 2] == 0.0
    assert feats[1, 2] == 0.5
    assert feats[2, 2] == 1.0


def test_evaluator_counts_calls():
    g = make_chain([1.0, 1.0])
    ev = FitnessEvaluator(g, "runtime", CFG)
    n = chromosome_length(g, 2)
    ev(np.full(n, 0.5))
    ev.evaluate_many([np.full(n, 0.3), np.full(n, 0.7)])
    assert ev.calls == 3
