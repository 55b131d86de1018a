"""Contextual-bandit policy training and the algorithm evaluation harness.

One bandit round per graph: compute search-based node features (a fixed
400-evaluation uniform run), encode, sample one composite action, dequantize
to proposals, run the search with budget K - 400, and score against a
uniform run with the full budget K.  The reward is r = -o_a / o_s, so
r > -1 means the policy-guided search beat the uniform one at equal total
cost.  Learning is plain REINFORCE with a learned scalar baseline: the
advantage uses a stop-gradient on the baseline, and the baseline itself
trains only through its squared-error term.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from . import rng as rngmod
from .brkga import BrkgaParams, ProposalSet, brkga_features, chromosome_length, run
from .features import to_multigraph
from .graph import ComputationGraph, check_task
from .policy import PolicyNetwork, decide, save_checkpoint
from .simulator import SimConfig


class BudgetParityError(RuntimeError):
    """The policy path and the uniform path consumed unequal budgets."""


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 4
    learning_rate: float = 1e-4
    grad_clip: float = 10.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    baseline_weight: float = 1e-4
    train_budget: int = 1000
    eval_budget: int = 5000
    feature_budget: int = 400
    val_interval: int = 200
    threads: int = 1
    # Common random numbers: score every action for a graph against the same
    # search streams (and hence a fixed uniform reference), so that reward
    # differences across visits are purely action-driven.  Set True to
    # resample the search streams at every visit instead.
    resample_search: bool = False

    def __post_init__(self):
        if self.train_budget <= self.feature_budget:
            raise ValueError("train_budget must exceed feature_budget")
        if self.eval_budget <= self.feature_budget:
            raise ValueError("eval_budget must exceed feature_budget")


@dataclass
class RewardRecord:
    graph_id: str
    objective_policy: float
    objective_uniform: float
    reward: float
    policy_evals: int
    uniform_evals: int
    degenerate: bool = False
    log_prob: torch.Tensor | None = None
    baseline: torch.Tensor | None = None


def compute_reward(
    graph: ComputationGraph,
    task: str,
    config: SimConfig,
    proposals: ProposalSet,
    params: BrkgaParams,
    budget: int,
    feature_budget: int,
    rng_policy: np.random.Generator,
    rng_uniform: np.random.Generator,
    elite_bias: float | None = None,
    graph_id: str = "",
) -> RewardRecord:
    """Score one action: policy proposals get budget - feature_budget
    fitness calls (features already consumed the rest), the uniform
    reference gets the full budget.  Call counters are checked for exact
    parity on every invocation.
    """
    check_task(task)
    uniform = ProposalSet.uniform(chromosome_length(graph, config.devices))
    res_uniform = run(
        graph, task, config, uniform, replace(params, budget=budget), rng_uniform
    )
    policy_params = replace(params, budget=budget - feature_budget)
    if elite_bias is not None:
        policy_params = replace(policy_params, elite_bias=elite_bias)
    res_policy = run(graph, task, config, proposals, policy_params, rng_policy)

    policy_evals = feature_budget + res_policy.evaluations
    if policy_evals != res_uniform.evaluations:
        raise BudgetParityError(
            f"policy path used {policy_evals} evaluations "
            f"(features {feature_budget} + search {res_policy.evaluations}), "
            f"uniform path used {res_uniform.evaluations}"
        )

    o_a = res_policy.best_fitness.objective
    o_s = res_uniform.best_fitness.objective
    degenerate = o_s == 0.0
    reward = -1.0 if degenerate else -o_a / o_s
    return RewardRecord(
        graph_id=graph_id,
        objective_policy=o_a,
        objective_uniform=o_s,
        reward=reward,
        policy_evals=policy_evals,
        uniform_evals=res_uniform.evaluations,
        degenerate=degenerate,
    )


def policy_reward(
    policy: PolicyNetwork,
    graph_id: str,
    graph: ComputationGraph,
    task: str,
    config: SimConfig,
    params: BrkgaParams,
    budget: int,
    feature_budget: int,
    seed: int,
    act_label: tuple = (),
    greedy: bool = False,
    with_grad: bool = True,
    resample_search: bool = False,
) -> RewardRecord:
    """Full per-graph pipeline: features -> act -> reward (+ grad tensors).

    The feature stream is keyed by graph id only, so a graph's features are
    identical on every visit.  Action streams are keyed by ``act_label``
    (e.g. the training step); search streams are keyed per graph (common
    random numbers) unless ``resample_search`` adds the label too.
    """
    feat_rng = rngmod.generator(seed, "features", graph_id)
    feats = brkga_features(graph, task, config, feat_rng, budget=feature_budget, params=params)
    act_rng = rngmod.generator(seed, "act", graph_id, *act_label)
    with torch.set_grad_enabled(with_grad):
        decision = decide(policy, graph, task, feats, rng=act_rng, greedy=greedy)
        baseline = policy.baseline(to_multigraph(graph, task, feats)) if with_grad else None
    search_label = act_label if resample_search else ()
    record = compute_reward(
        graph,
        task,
        config,
        decision.proposals,
        params,
        budget,
        feature_budget,
        rng_policy=rngmod.generator(seed, "search", graph_id, *search_label),
        rng_uniform=rngmod.generator(seed, "uniform", graph_id, *search_label),
        elite_bias=decision.elite_bias,
        graph_id=graph_id,
    )
    record.log_prob = decision.log_prob
    record.baseline = baseline
    return record


def reinforce_loss(
    records: list[RewardRecord], baseline_weight: float
) -> tuple[torch.Tensor, float, float]:
    """REINFORCE + baseline regression loss over one minibatch.

    Returns (loss, mean reward, baseline MSE).  Degenerate records (zero
    uniform objective) are excluded from the gradient.
    """
    usable = [r for r in records if not r.degenerate]
    if not usable:
        raise ValueError("no usable records in batch")
    rewards = torch.tensor([r.reward for r in usable], dtype=torch.float64)
    log_probs = torch.stack([r.log_prob for r in usable])
    baselines = torch.stack([r.baseline for r in usable])
    advantage = rewards - baselines.detach()
    policy_term = -(advantage * log_probs).mean()
    mse = ((baselines - rewards) ** 2).mean()
    loss = policy_term + baseline_weight * mse
    return loss, float(rewards.mean()), float(mse.detach())


@dataclass
class TrainResult:
    checkpoint_path: Path
    train_log: list[dict]
    val_log: list[dict]
    best_val_reward: float


def batch_rewards(
    policy: PolicyNetwork,
    items: list[tuple[str, ComputationGraph]],
    task: str,
    config: SimConfig,
    params: BrkgaParams,
    budget: int,
    feature_budget: int,
    seed: int,
    act_label: tuple = (),
    greedy: bool = False,
    with_grad: bool = True,
    threads: int = 1,
    resample_search: bool = False,
) -> list[RewardRecord]:
    """Per-graph rewards for a minibatch, with optional worker threads.

    The search-heavy phases (feature evolution and the two scoring runs) are
    pure functions of derived seeds, so they can run on worker threads; the
    torch forward passes stay on the calling thread.  Results are identical
    for any thread count.
    """
    search_label = act_label if resample_search else ()

    def features_for(item):
        gid, g = item
        feat_rng = rngmod.generator(seed, "features", gid)
        return brkga_features(g, task, config, feat_rng, budget=feature_budget, params=params)

    def reward_for(arg):
        (gid, g), decision = arg
        return compute_reward(
            g, task, config, decision.proposals, params, budget, feature_budget,
            rng_policy=rngmod.generator(seed, "search", gid, *search_label),
            rng_uniform=rngmod.generator(seed, "uniform", gid, *search_label),
            elite_bias=decision.elite_bias, graph_id=gid,
        )

    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            all_feats = list(pool.map(features_for, items))
    else:
        all_feats = [features_for(item) for item in items]

    decisions = []
    baselines = []
    with torch.set_grad_enabled(with_grad):
        for (gid, g), feats in zip(items, all_feats):
            act_rng = rngmod.generator(seed, "act", gid, *act_label)
            decisions.append(decide(policy, g, task, feats, rng=act_rng, greedy=greedy))
            baselines.append(
                policy.baseline(to_multigraph(g, task, feats)) if with_grad else None
            )

    args = list(zip(items, decisions))
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(reward_for, args))
    else:
        records = [reward_for(a) for a in args]
    for record, decision, baseline in zip(records, decisions, baselines):
        record.log_prob = decision.log_prob
        record.baseline = baseline
    return records


def _mean_greedy_reward(policy, graphs, task, config, params, tc, seed) -> float:
    records = batch_rewards(
        policy, graphs, task, config, params, tc.train_budget, tc.feature_budget,
        seed, act_label=("val",), greedy=True, with_grad=False, threads=tc.threads,
        resample_search=tc.resample_search,
    )
    return float(np.mean([r.reward for r in records]))


def train(
    policy: PolicyNetwork,
    dataset: dict[str, list[tuple[str, ComputationGraph]]],
    task: str,
    train_config: TrainConfig,
    params: BrkgaParams,
    config: SimConfig,
    seed: int,
    out_dir,
    log_every: int = 1,
) -> TrainResult:
    """REINFORCE training loop with periodic greedy validation.

    Writes ``train_log.csv`` (step, mean_reward, baseline_loss, grad_norm),
    ``val_log.csv`` (step, mean_reward), and keeps the checkpoint with the
    best validation reward at ``best.ckpt`` (plus ``last.ckpt``).
    """
    check_task(task)
    if train_config.train_budget < train_config.feature_budget + params.population:
        raise ValueError("train_budget must cover features plus one population")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_graphs = dataset["train"]
    val_graphs = dataset.get("valid", [])
    if not train_graphs:
        raise ValueError("dataset has no training graphs")

    optimizer = torch.optim.Adam(
        policy.parameters(),
        lr=train_config.learning_rate,
        betas=(train_config.adam_beta1, train_config.adam_beta2),
        eps=train_config.adam_eps,
    )
    pick_rng = rngmod.generator(seed, "batch")
    train_log: list[dict] = []
    val_log: list[dict] = []
    best_val = -math.inf
    best_path = out_dir / "best.ckpt"

    for step in range(1, train_config.steps + 1):
        replace_pick = len(train_graphs) < train_config.batch_size
        idx = pick_rng.choice(
            len(train_graphs), size=train_config.batch_size, replace=replace_pick
        )
        records = batch_rewards(
            policy,
            [train_graphs[int(i)] for i in idx],
            task,
            config,
            params,
            train_config.train_budget,
            train_config.feature_budget,
            seed,
            act_label=(step,),
            threads=train_config.threads,
            resample_search=train_config.resample_search,
        )
        usable = [r for r in records if not r.degenerate]
        if usable:
            loss, mean_reward, baseline_mse = reinforce_loss(
                records, train_config.baseline_weight
            )
            optimizer.zero_grad()
            loss.backward()
            grad_norm = float(
                torch.nn.utils.clip_grad_norm_(policy.parameters(), train_config.grad_clip)
            )
            if math.isfinite(grad_norm):
                optimizer.step()
        else:
            mean_reward, baseline_mse, grad_norm = -1.0, 0.0, 0.0
        if step % log_every == 0:
            train_log.append(
                {
                    "step": step,
                    "mean_reward": mean_reward,
                    "baseline_loss": baseline_mse,
                    "grad_norm": grad_norm,
                }
            )
        if val_graphs and (step % train_config.val_interval == 0 or step == train_config.steps):
            val_reward = _mean_greedy_reward(
                policy, val_graphs, task, config, params, train_config, seed
            )
            val_log.append({"step": step, "mean_reward": val_reward})
            if val_reward > best_val:
                best_val = val_reward
                save_checkpoint(policy, best_path)

    if not best_path.exists():
        save_checkpoint(policy, best_path)
    save_checkpoint(policy, out_dir / "last.ckpt")
    _write_csv(out_dir / "train_log.csv", train_log, ["step", "mean_reward", "baseline_loss", "grad_norm"])
    _write_csv(out_dir / "val_log.csv", val_log, ["step", "mean_reward"])
    return TrainResult(best_path, train_log, val_log, best_val)


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


# -- evaluation harness --------------------------------------------------------


@dataclass
class GraphEvalRecord:
    graph_id: str
    base_id: str
    algorithm: str
    objective: float
    reference: float
    best_known: float
    wall_time: float

    @property
    def improvement_pct(self) -> float:
        return 100.0 * (self.reference - self.objective) / self.reference

    @property
    def gap_pct(self) -> float:
        return 100.0 * (self.objective - self.best_known) / self.best_known


@dataclass
class EvalReport:
    rows: list[dict]
    timings: list[dict]
    records: list[GraphEvalRecord]
    excluded: int


def evaluate(
    dataset: dict[str, list[tuple[str, ComputationGraph]]],
    split: str,
    task: str,
    algorithms: list[str],
    config: SimConfig,
    budget: int,
    seed: int,
    context: dict | None = None,
    base_ids: dict[str, str] | None = None,
    include_oracle: bool = False,
    oracle_cap: int = 6,
) -> EvalReport:
    """Run each algorithm on every graph of a split and tabulate the mean
    percent improvement over the uniform-search reference at the same
    budget, and the mean percent gap from the best objective any evaluated
    algorithm achieved (plus the exhaustive optimum on small graphs when
    ``include_oracle``).  Graphs whose reference or best objective is zero
    are excluded and counted.
    """
    from .baselines import exhaustive_oracle, get_algorithm

    check_task(task)
    context = dict(context or {})
    graphs = dataset[split]
    reference_alg = get_algorithm("brkga")
    per_graph: dict[str, dict[str, tuple[float, float]]] = {}
    reference: dict[str, float] = {}
    bests: dict[str, float] = {}

    for gid, g in graphs:
        ref_result = reference_alg(
            g, task, config, budget, rngmod.generator(seed, "alg", "brkga", gid), context
        )
        reference[gid] = ref_result.objective
        results = {"brkga": (ref_result.objective, ref_result.wall_time)}
        for name in algorithms:
            if name == "brkga":
                continue
            alg = get_algorithm(name)
            t0 = time.perf_counter()
            res = alg(
                g, task, config, budget, rngmod.generator(seed, "alg", name, gid), context
            )
            results[name] = (res.objective, time.perf_counter() - t0)
        best = min(obj for obj, _t in results.values())
        if include_oracle and g.n_ops <= oracle_cap:
            oracle = exhaustive_oracle(g, task, config, cap=oracle_cap)
            best = min(best, oracle.objective)
        per_graph[gid] = results
        bests[gid] = best

    requested = list(dict.fromkeys(algorithms))
    records: list[GraphEvalRecord] = []
    excluded = 0
    for gid, _g in graphs:
        if reference[gid] == 0.0 or bests[gid] == 0.0:
            excluded += 1
            continue
        for name in requested:
            obj, wall = per_graph[gid][name]
            records.append(
                GraphEvalRecord(
                    graph_id=gid,
                    base_id=(base_ids or {}).get(gid, gid),
                    algorithm=name,
                    objective=obj,
                    reference=reference[gid],
                    best_known=bests[gid],
                    wall_time=wall,
                )
            )

    rows = []
    timings = []
    for name in requested:
        recs = [r for r in records if r.algorithm == name]
        if not recs:
            continue
        rows.append(
            {
                "algorithm": name,
                "split": split,
                "mean_improvement_pct": float(np.mean([r.improvement_pct for r in recs])),
                "mean_gap_pct": float(np.mean([r.gap_pct for r in recs])),
                "n_graphs": len(recs),
            }
        )
        timings.append(
            {"algorithm": name, "mean_wall_time_sec": float(np.mean([r.wall_time for r in recs]))}
        )
    return EvalReport(rows=rows, timings=timings, records=records, excluded=excluded)
