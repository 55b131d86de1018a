"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The expensive fixtures
(the tiny-instance set with exhaustive optima, the synthetic training
dataset, and the trained policy) are session-scoped and shared between
criteria.
"""

import math
from dataclasses import replace

import numpy as np
import pytest
import torch

from graphsched import rng as rngmod
from graphsched.baselines import OracleCapError, exhaustive_oracle
from graphsched.brkga import (
    BrkgaParams,
    ProposalSet,
    brkga_features,
    chromosome_length,
    run,
    total_fitness_calls,
)
from graphsched.datagen import GenSpec, filter_interesting, generate_instance
from graphsched.features import to_multigraph
from graphsched.graph import ComputationGraph, ConsumerEdge, Op, Tensor
from graphsched.policy import PolicyConfig, PolicyNetwork, decide, dequantize
from graphsched.simulator import SimConfig
from graphsched.trainer import TrainConfig, batch_rewards, compute_reward, train

from bruteforce import brute_force_optimum
from conftest import make_chain, random_tiny_graph

torch.set_num_threads(1)

ZERO_COST = SimConfig()  # two devices, zero-cost transfers
UNLIMITED = SimConfig(memory_capacity=math.inf)


def _report(num: int, text: str) -> None:
    print(f"\n[criterion {num:2d}] PASS - {text}")


# -- shared fixtures -------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_instances():
    """100 random instances (<= 6 ops, 2 devices) with exhaustive optima.

    Instances whose extended graphs have more than 2500 (placement, order)
    pairs are resampled, purely to bound the independent brute-force oracle's
    runtime; costs are integers so optima compare exactly.
    """
    instances = []
    rng = np.random.default_rng(20260810)
    while len(instances) < 100:
        g = random_tiny_graph(rng, max_ops=6, min_ops=2)
        task = "runtime" if len(instances) % 2 else "peak_memory"
        try:
            oracle = exhaustive_oracle(g, task, ZERO_COST, pair_cap=2500)
        except OracleCapError:
            continue
        instances.append((g, task, oracle))
    return instances


@pytest.fixture(scope="module")
def quick_policy():
    """A briefly trained policy (enough to be 'trained', cheap to build)."""
    rng = np.random.default_rng(99)
    dataset = {"train": [], "valid": [], "test": []}
    spec = GenSpec(min_ops=15, max_ops=30)
    for i in range(12):
        g = generate_instance(spec, rngmod.generator(99, "c9gen", i))
        dataset["train" if i < 9 else "valid"].append((f"g{i}", g))
    policy = PolicyNetwork(
        PolicyConfig(hidden=8, rounds=1, k_place=2, k_sched=4),
        rngmod.generator(99, "c9init"),
    )
    tc = TrainConfig(steps=30, batch_size=2, learning_rate=3e-3, baseline_weight=1.0,
                     train_budget=700, feature_budget=400, val_interval=30)
    train(policy, dataset, "runtime", tc, BrkgaParams(), UNLIMITED, seed=55,
          out_dir="/tmp/graphsched_accept_c9")
    return policy


# -- criterion 1 -------------------------------------------------------------------


def test_criterion_1_simulator_oracle_equivalence(tiny_instances):
    """Exhaustive optimum through the production simulator matches an
    independently written brute-force evaluator exactly on 100 instances."""
    for g, task, oracle in tiny_instances:
        cls, value = brute_force_optimum(g, task, ZERO_COST)
        assert (0 if oracle.fitness.feasible else 1) == cls
        assert oracle.objective == value  # zero tolerance
    # the compiled enumeration agrees with the pure-simulate path
    for g, task, oracle in tiny_instances[:10]:
        ref = exhaustive_oracle(g, task, ZERO_COST, use_kernel=False)
        assert ref.objective == oracle.objective
    _report(1, "oracle == independent brute force on 100/100 instances (exact)")


# -- criterion 2 -------------------------------------------------------------------


def test_criterion_2_brkga_reaches_optimum(tiny_instances):
    """Uniform-proposal evolution with a 5000-call budget finds the
    exhaustive optimum on at least 95 of the 100 tiny instances."""
    hits = 0
    for i, (g, task, oracle) in enumerate(tiny_instances):
        n = chromosome_length(g, ZERO_COST.devices)
        res = run(
            g, task, ZERO_COST, ProposalSet.uniform(n),
            BrkgaParams(budget=5000), rngmod.generator(2, "c2", i),
        )
        if res.best_fitness.objective == oracle.objective:
            hits += 1
    assert hits >= 95
    _report(2, f"5000-evaluation search matched the optimum on {hits}/100 instances")


# -- criterion 3 -------------------------------------------------------------------


def test_criterion_3_dequantization_moments():
    """Every quantized action reproduces its mean and variance analytically."""
    worst = 0.0
    for k in (1, 2, 4, 16):
        m, v = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
        alpha, beta = dequantize(m, v, k)
        assert np.all(alpha > 0) and np.all(beta > 0)
        mu = (m + 1) / (k + 1)
        var = mu * (1 - mu) * (v + 1) / (k + 1)
        mean_err = np.abs(alpha / (alpha + beta) - mu)
        var_err = np.abs(
            alpha * beta / ((alpha + beta) ** 2 * (alpha + beta + 1)) - var
        )
        worst = max(worst, float(mean_err.max()), float(var_err.max()))
    assert worst < 1e-9
    _report(3, f"beta moments match quantized targets (worst error {worst:.2e})")


# -- criterion 4 -------------------------------------------------------------------


def test_criterion_4_elitism_monotonicity():
    """Best-fitness history never worsens, over 1000 random runs."""
    rng = np.random.default_rng(4)
    violations = 0
    for trial in range(1000):
        g = random_tiny_graph(rng, max_ops=5, min_ops=1)
        task = "runtime" if trial % 2 else "peak_memory"
        n = chromosome_length(g, 2)
        alpha = rng.uniform(0.3, 3.0, size=n)
        beta = rng.uniform(0.3, 3.0, size=n)
        res = run(
            g, task, ZERO_COST, ProposalSet(alpha, beta),
            BrkgaParams(population=8, elites=2, children=4, budget=40),
            rngmod.generator(4, "c4", trial),
        )
        keys = [f.key() for f in res.history]
        violations += sum(1 for a, b in zip(keys, keys[1:]) if b > a)
    assert violations == 0
    _report(4, "0 monotonicity violations in 1000 random runs")


# -- criterion 5 -------------------------------------------------------------------


def test_criterion_5_reward_identity_and_budget_parity():
    """o_a == o_s gives r == -1 exactly; the policy path (features + search)
    and the uniform path consume identical instrumented budgets."""
    # identity on forced instances: a chain on one device has one solution
    chain = make_chain([2.0, 5.0, 1.0, 3.0])
    one_dev = SimConfig(devices=1)
    record = compute_reward(
        chain, "runtime", one_dev, ProposalSet.uniform(chromosome_length(chain, 1)),
        BrkgaParams(population=20, elites=3, children=12), budget=500, feature_budget=400,
        rng_policy=rngmod.generator(5, "p"), rng_uniform=rngmod.generator(5, "u"),
    )
    assert record.objective_policy == record.objective_uniform
    assert record.reward == -1.0

    # instrumented parity over a batch of real policy reward computations
    policy = PolicyNetwork(
        PolicyConfig(hidden=8, rounds=1, k_sched=4), rngmod.generator(5, "init")
    )
    rng = np.random.default_rng(5)
    params = BrkgaParams()
    budget, feature_budget = 1000, 400
    for trial in range(10):
        g = random_tiny_graph(rng, max_ops=8, min_ops=3)
        before = total_fitness_calls()
        feats = brkga_features(
            g, "runtime", ZERO_COST, rngmod.generator(5, "f", trial),
            budget=feature_budget, params=params,
        )
        feature_calls = total_fitness_calls() - before
        assert feature_calls == feature_budget
        decision = decide(policy, g, "runtime", feats, greedy=True)
        before = total_fitness_calls()
        record = compute_reward(
            g, "runtime", ZERO_COST, decision.proposals, params, budget, feature_budget,
            rng_policy=rngmod.generator(5, "rp", trial),
            rng_uniform=rngmod.generator(5, "ru", trial),
        )
        search_calls = total_fitness_calls() - before
        assert search_calls == (budget - feature_budget) + budget
        assert feature_calls + (search_calls - budget) == budget
        assert record.policy_evals == record.uniform_evals == budget
        assert record.reward == -record.objective_policy / record.objective_uniform
    _report(5, "reward identity exact; features + search == uniform budget on every record")


# -- criterion 6 -------------------------------------------------------------------


def test_criterion_6_gradient_check():
    """Autograd REINFORCE + baseline gradients match central differences
    (h = 1e-5, float64) on a 3-node graph with hidden size 4 and 1 round."""
    from torch.nn.utils import parameters_to_vector, vector_to_parameters

    ops = [Op("a", 2.0), Op("b", 3.0), Op("c", 1.0)]
    tensors = [Tensor("x", "a", 10), Tensor("y", "a", 20)]
    consumers = [ConsumerEdge("x", "b"), ConsumerEdge("y", "c")]
    g = ComputationGraph(ops, tensors, consumers)
    policy = PolicyNetwork(
        PolicyConfig(hidden=4, rounds=1, k_place=2, k_sched=2),
        rngmod.generator(6, "init"),
    )
    mg = to_multigraph(g, "runtime")
    h = policy.encode(mg)
    assignment, _ = policy.act(h, rng=rngmod.generator(6, "act"))
    reward, weight = -0.93, 1e-4
    b0 = float(policy.baseline(mg).detach())

    logp = policy.log_prob(h, assignment)
    b = policy.baseline(mg)
    loss = -(reward - b.detach()) * logp + weight * (b - reward) ** 2
    policy.zero_grad()
    loss.backward()
    analytic = torch.cat(
        [
            p.grad.reshape(-1) if p.grad is not None else torch.zeros(p.numel(), dtype=torch.float64)
            for p in policy.parameters()
        ]
    ).numpy()

    def loss_value() -> float:
        hh = policy.encode(mg)
        lp = policy.log_prob(hh, assignment)
        bb = policy.baseline(mg)
        return float((-(reward - b0) * lp + weight * (bb - reward) ** 2).detach())

    theta = parameters_to_vector(policy.parameters()).detach().clone()
    step = 1e-5
    fd = np.zeros_like(analytic)
    with torch.no_grad():
        for i in range(len(theta)):
            for sign in (1.0, -1.0):
                bumped = theta.clone()
                bumped[i] += sign * step
                vector_to_parameters(bumped, policy.parameters())
                fd[i] += sign * loss_value()
        fd /= 2 * step
        vector_to_parameters(theta, policy.parameters())

    # Guarded per-coordinate relative error: sub-1e-5 coordinates compare
    # absolutely at 1e-9, above the central-difference roundoff floor.
    rel = np.abs(analytic - fd) / np.maximum.reduce(
        [np.abs(analytic), np.abs(fd), np.full_like(fd, 1e-5)]
    )
    assert float(rel.max()) < 1e-4
    _report(6, f"gradient check over {len(theta)} coordinates (max rel err {rel.max():.2e})")


# -- criterion 7 -------------------------------------------------------------------


def test_criterion_7_synthetic_filter_improvement():
    """A retained set of >= 200 generated graphs improves by 17-23% on
    average when the uniform search budget grows from 1K to 10K."""
    spec = GenSpec()  # paper-scale node counts and thresholds
    improvements = []
    attempts = 0
    while len(improvements) < 200:
        attempts += 1
        g = generate_instance(spec, rngmod.generator(7, "gen", attempts))
        keep, improvement = filter_interesting(
            g, spec, UNLIMITED, rngmod.generator(7, "filter", attempts)
        )
        if keep:
            improvements.append(improvement)
    mean = float(np.mean(improvements))
    assert 0.17 <= mean <= 0.23
    _report(
        7,
        f"mean retained improvement {100 * mean:.1f}% "
        f"({len(improvements)} kept of {attempts} candidates)",
    )


# -- criterion 9 -------------------------------------------------------------------


def test_criterion_9_budget_generalization(quick_policy):
    """For budgets 1K/2K/5K with nested evaluation streams, both the uniform
    search and the trained policy's search never worsen per instance."""
    spec = GenSpec(min_ops=15, max_ops=30)
    params = BrkgaParams()
    budgets = (1000, 2000, 5000)
    for i in range(10):
        g = generate_instance(spec, rngmod.generator(9, "gen", i))
        n = chromosome_length(g, 2)
        uniform = [
            run(
                g, "runtime", UNLIMITED, ProposalSet.uniform(n),
                replace(params, budget=b), rngmod.generator(9, "u", i),
            ).best_fitness.key()
            for b in budgets
        ]
        assert uniform[0] >= uniform[1] >= uniform[2]

        feats = brkga_features(
            g, "runtime", UNLIMITED, rngmod.generator(9, "f", i), budget=400, params=params
        )
        decision = decide(quick_policy, g, "runtime", feats, greedy=True)
        guided = [
            run(
                g, "runtime", UNLIMITED, decision.proposals,
                replace(params, budget=b - 400), rngmod.generator(9, "p", i),
            ).best_fitness.key()
            for b in budgets
        ]
        assert guided[0] >= guided[1] >= guided[2]
    _report(9, "objectives non-worsening across budgets 1K/2K/5K on 10/10 instances")


# -- criterion 10 ------------------------------------------------------------------


def _distinct_cost_graph(rng: np.random.Generator, n: int) -> ComputationGraph:
    """Random connected DAG whose per-node costs are all distinct, so the
    one-hot feature argmaxes are permutation-stable."""
    durations = rng.permutation(np.arange(1, n + 1)) + rng.random(n) * 0.5
    sizes = rng.permutation(np.arange(1, n)) * 10 + 5
    ops = [Op(f"op{i}", float(durations[i])) for i in range(n)]
    tensors = [Tensor(f"t{i}", f"op{i}", int(sizes[i])) for i in range(n - 1)]
    consumers = [ConsumerEdge(f"t{i}", f"op{i + 1}") for i in range(n - 1)]
    for i in range(n - 1):
        j = int(rng.integers(i + 1, n))
        if (f"t{i}", f"op{j}") not in {(e.tensor, e.op) for e in consumers}:
            consumers.append(ConsumerEdge(f"t{i}", f"op{j}"))
    return ComputationGraph(ops, tensors, consumers)


def test_criterion_10_permutation_equivariance():
    """Encoding is equivariant and the action distribution and baseline are
    invariant under node relabeling, to 1e-9, over 100 relabelings/graph."""
    policy = PolicyNetwork(
        PolicyConfig(hidden=8, rounds=2, k_place=2, k_sched=4),
        rngmod.generator(10, "init"),
    )
    rng = np.random.default_rng(10)
    worst = 0.0
    for graph_idx in range(3):
        g = _distinct_cost_graph(rng, 6)
        mg = to_multigraph(g, "runtime")
        with torch.no_grad():
            h = policy.encode(mg)
            b = float(policy.baseline(mg))
            logits = policy.head(h).numpy()  # rows determine each node's action law
        for _ in range(100):
            perm = rng.permutation(g.n_ops)
            gp = ComputationGraph([g.ops[i] for i in perm], g.tensors, g.consumers)
            mgp = to_multigraph(gp, "runtime")
            with torch.no_grad():
                hp = policy.encode(mgp)
                bp = float(policy.baseline(mgp))
                logits_p = policy.head(hp).numpy()
            position = {int(op_i): new_i for new_i, op_i in enumerate(perm)}
            for i in range(g.n_ops):
                worst = max(worst, float(np.abs(h[i].numpy() - hp[position[i]].numpy()).max()))
                worst = max(worst, float(np.abs(logits[i] - logits_p[position[i]]).max()))
            worst = max(worst, abs(b - bp))
        assert worst < 1e-9
    _report(10, f"equivariance over 300 relabelings (worst deviation {worst:.2e})")
