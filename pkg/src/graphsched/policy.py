"""Graph-network policy: per-node proposal-distribution actions plus a
scalar value baseline.

The encoder runs T rounds of message passing over the attributed multigraph.
Round t computes, for every edge e = (s -> t), a forward message from
MLP_msg([h_s, h_t, h_e]) and a reverse message from MLP_msg'([h_s, h_t, h_e]);
each node then consumes [h_v, agg(incoming forward) + agg(outgoing reverse)]
through either an MLP update or a gated-recurrent (GRU) update.  Edge
encodings are computed once and stay fixed across rounds.

Action heads are conditionally independent per node: for each device a
quantized (mean, variance) pair over k_place levels, plus one pair over
k_sched levels for the scheduling priority.  The joint log-probability is the
sum over all nodes and categoricals.  Dequantization maps the quantized pair
to Beta(alpha, beta) parameters whose analytic mean and variance equal the
quantized values.

The baseline value uses a separate encoder with its own weights and
mean-pools MLP_g(h_v) before a final MLP, so it is invariant to node order.

Checkpoint container (format version 1): 8-byte magic ``GSCHCKPT``, a
little-endian uint32 header length, a UTF-8 JSON header
{"format_version", "arch", "arrays": [{"name", "shape", "dtype"}, ...]},
then the raw array payloads, C-contiguous little-endian, in header order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .brkga import ProposalSet, chromosome_length
from .features import AttributedMultigraph, pinned_node, to_multigraph
from .graph import ComputationGraph

CHECKPOINT_MAGIC = b"GSCHCKPT"
CHECKPOINT_VERSION = 1

_AGGREGATIONS = ("sum", "mean")
_NODE_UPDATES = ("mlp", "gru")


@dataclass(frozen=True)
class PolicyConfig:
    node_features: int = 11
    edge_features: int = 3
    hidden: int = 32
    rounds: int = 2
    devices: int = 2
    k_place: int = 2
    k_sched: int = 16
    aggregation: str = "mean"
    node_update: str = "gru"
    residual: bool = False
    placement_actions: bool = True
    scheduling_actions: bool = True
    crossover_action: bool = False
    k_cross: int = 4

    def __post_init__(self):
        if self.hidden < 1 or self.rounds < 0 or self.devices < 1:
            raise ValueError("hidden must be >= 1, rounds >= 0, devices >= 1")
        if self.k_place < 1 or self.k_sched < 1 or self.k_cross < 1:
            raise ValueError("quantization levels must be >= 1")
        if self.aggregation not in _AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {_AGGREGATIONS}")
        if self.node_update not in _NODE_UPDATES:
            raise ValueError(f"node_update must be one of {_NODE_UPDATES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyConfig":
        return cls(**data)


def dequantize(m, v, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Quantized (mean, variance) indices -> Beta(alpha, beta) parameters.

    mu = (m+1)/(k+1) and sigma^2 = mu (1-mu) (v+1)/(k+1); the returned
    parameters are always positive and reproduce mu and sigma^2 as the
    distribution's analytic moments.
    """
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(m < 0) or np.any(m > k - 1) or np.any(v < 0) or np.any(v > k - 1):
        raise ValueError(f"quantized indices must lie in [0, {k - 1}]")
    mu = (m + 1.0) / (k + 1.0)
    var = mu * (1.0 - mu) * (v + 1.0) / (k + 1.0)
    beta = mu * (1.0 - mu) ** 2 / var - 1.0 + mu
    alpha = beta * mu / (1.0 - mu)
    return alpha, beta


def dequantize_crossover(c: int, k: int) -> float:
    """Quantized crossover index -> elite bias, clamped below 1."""
    if not 0 <= c <= k - 1:
        raise ValueError(f"crossover index must lie in [0, {k - 1}]")
    return min(0.5 * (1.0 + (c + 1) / k), 1.0 - 1e-9)


@dataclass
class ActionAssignment:
    """Sampled quantized actions; arrays are int64, None when the action
    group is disabled."""

    place_m: np.ndarray | None  # (n_ops, devices)
    place_v: np.ndarray | None
    sched_m: np.ndarray | None  # (n_ops,)
    sched_v: np.ndarray | None
    crossover: int | None = None


def _init_linear(layer: nn.Linear, rng: np.random.Generator) -> None:
    bound = 1.0 / math.sqrt(layer.in_features)
    layer.weight.data = torch.from_numpy(
        rng.uniform(-bound, bound, size=(layer.out_features, layer.in_features))
    )
    layer.bias.data = torch.from_numpy(rng.uniform(-bound, bound, size=layer.out_features))


def _mlp(in_dim: int, out_dim: int, hidden: int, rng: np.random.Generator) -> nn.Sequential:
    """Two ReLU hidden layers of the state width, linear output."""
    layers = [
        nn.Linear(in_dim, hidden, dtype=torch.float64),
        nn.ReLU(),
        nn.Linear(hidden, hidden, dtype=torch.float64),
        nn.ReLU(),
        nn.Linear(hidden, out_dim, dtype=torch.float64),
    ]
    for layer in layers:
        if isinstance(layer, nn.Linear):
            _init_linear(layer, rng)
    return nn.Sequential(*layers)


class _Encoder(nn.Module):
    def __init__(self, config: PolicyConfig, rng: np.random.Generator):
        super().__init__()
        h = config.hidden
        self.config = config
        self.mlp_node_in = _mlp(config.node_features, h, h, rng)
        self.mlp_edge_in = _mlp(config.edge_features, h, h, rng)
        self.mlp_msg_fwd = _mlp(3 * h, h, h, rng)
        self.mlp_msg_rev = _mlp(3 * h, h, h, rng)
        if config.node_update == "mlp":
            self.update = _mlp(2 * h, h, h, rng)
        else:
            cell = nn.GRUCell(h, h, dtype=torch.float64)
            bound = 1.0 / math.sqrt(h)
            for name, param in cell.named_parameters():
                param.data = torch.from_numpy(
                    rng.uniform(-bound, bound, size=tuple(param.shape))
                )
            self.update = cell

    def forward(self, mg: AttributedMultigraph) -> torch.Tensor:
        cfg = self.config
        x_v = torch.from_numpy(np.ascontiguousarray(mg.node_features))
        h = self.mlp_node_in(x_v)
        n = h.shape[0]
        if mg.n_edges:
            src = torch.from_numpy(np.ascontiguousarray(mg.edge_src))
            dst = torch.from_numpy(np.ascontiguousarray(mg.edge_dst))
            h_e = self.mlp_edge_in(torch.from_numpy(np.ascontiguousarray(mg.edge_features)))
            if cfg.aggregation == "mean":
                ones = torch.ones(mg.n_edges, dtype=torch.float64)
                in_deg = torch.zeros(n, dtype=torch.float64).index_add_(0, dst, ones)
                out_deg = torch.zeros(n, dtype=torch.float64).index_add_(0, src, ones)
                in_norm = 1.0 / in_deg.clamp(min=1.0)
                out_norm = 1.0 / out_deg.clamp(min=1.0)
        for _round in range(cfg.rounds):
            if mg.n_edges:
                cat = torch.cat([h[src], h[dst], h_e], dim=1)
                m_fwd = self.mlp_msg_fwd(cat)
                m_rev = self.mlp_msg_rev(cat)
                agg_in = torch.zeros_like(h).index_add_(0, dst, m_fwd)
                agg_out = torch.zeros_like(h).index_add_(0, src, m_rev)
                if cfg.aggregation == "mean":
                    agg = agg_in * in_norm[:, None] + agg_out * out_norm[:, None]
                else:
                    agg = agg_in + agg_out
            else:
                agg = torch.zeros_like(h)
            if cfg.node_update == "mlp":
                update = self.update(torch.cat([h, agg], dim=1))
            else:
                update = self.update(agg, h)
            h = h + update if cfg.residual else update
        return h


class PolicyNetwork(nn.Module):
    """Policy encoder + action heads, and a separate baseline network."""

    def __init__(self, config: PolicyConfig, rng: np.random.Generator | None = None):
        super().__init__()
        if rng is None:
            rng = np.random.default_rng(0)
        self.config = config
        h = config.hidden
        self.encoder = _Encoder(config, rng)
        head_width = 0
        if config.placement_actions:
            head_width += config.devices * 2 * config.k_place
        if config.scheduling_actions:
            head_width += 2 * config.k_sched
        self.head = _mlp(h, head_width, h, rng) if head_width else None
        self.crossover_head = (
            _mlp(h, config.k_cross, h, rng) if config.crossover_action else None
        )
        self.baseline_encoder = _Encoder(config, rng)
        self.mlp_pool = _mlp(h, h, h, rng)
        self.mlp_value = _mlp(h, 1, h, rng)

    # -- inference -----------------------------------------------------------

    def encode(self, mg: AttributedMultigraph) -> torch.Tensor:
        """Per-node representations from the policy encoder."""
        return self.encoder(mg)

    def baseline(self, mg: AttributedMultigraph) -> torch.Tensor:
        """Scalar value estimate; permutation-invariant in node order."""
        h = self.baseline_encoder(mg)
        return self.mlp_value(self.mlp_pool(h).mean(dim=0)).squeeze(-1)

    def act(
        self,
        h: torch.Tensor,
        rng: np.random.Generator | None = None,
        greedy: bool = False,
    ) -> tuple[ActionAssignment, torch.Tensor]:
        """Sample (or argmax) every per-node categorical.

        Returns the assignment and the differentiable joint log-probability,
        the sum of the chosen categories' log-softmax terms over all nodes.
        Sampling consumes the numpy generator in a fixed block order:
        placement means, placement variances, scheduling means, scheduling
        variances, then the crossover action.
        """
        if not greedy and rng is None:
            raise ValueError("sampling requires an rng; pass greedy=True for argmax")
        cfg = self.config
        o = h.shape[0]
        logp = torch.zeros((), dtype=torch.float64)
        place_m = place_v = sched_m = sched_v = None
        offset = 0
        out = self.head(h) if self.head is not None else None
        if cfg.placement_actions:
            width = cfg.devices * 2 * cfg.k_place
            block = out[:, offset : offset + width].reshape(o, cfg.devices, 2, cfg.k_place)
            offset += width
            place_m, lp_m = _pick(block[:, :, 0, :], rng, greedy)
            place_v, lp_v = _pick(block[:, :, 1, :], rng, greedy)
            logp = logp + lp_m + lp_v
        if cfg.scheduling_actions:
            width = 2 * cfg.k_sched
            block = out[:, offset : offset + width].reshape(o, 2, cfg.k_sched)
            offset += width
            sched_m, lp_m = _pick(block[:, 0, :], rng, greedy)
            sched_v, lp_v = _pick(block[:, 1, :], rng, greedy)
            logp = logp + lp_m + lp_v
        crossover = None
        if self.crossover_head is not None:
            pooled = h.mean(dim=0)
            logits = self.crossover_head(pooled)[None, :]
            idx, lp = _pick(logits, rng, greedy)
            crossover = int(idx[0])
            logp = logp + lp
        return (
            ActionAssignment(
                place_m=_np(place_m),
                place_v=_np(place_v),
                sched_m=_np(sched_m),
                sched_v=_np(sched_v),
                crossover=crossover,
            ),
            logp,
        )

    def log_prob(self, h: torch.Tensor, assignment: ActionAssignment) -> torch.Tensor:
        """Joint log-probability of a fixed assignment under the current
        parameters (differentiable; used for scoring and gradient checks)."""
        cfg = self.config
        o = h.shape[0]
        logp = torch.zeros((), dtype=torch.float64)
        out = self.head(h) if self.head is not None else None
        offset = 0
        if cfg.placement_actions:
            width = cfg.devices * 2 * cfg.k_place
            block = out[:, offset : offset + width].reshape(o, cfg.devices, 2, cfg.k_place)
            offset += width
            lp = torch.log_softmax(block, dim=-1)
            m_idx = torch.from_numpy(assignment.place_m)[:, :, None]
            v_idx = torch.from_numpy(assignment.place_v)[:, :, None]
            logp = logp + lp[:, :, 0, :].gather(-1, m_idx).sum()
            logp = logp + lp[:, :, 1, :].gather(-1, v_idx).sum()
        if cfg.scheduling_actions:
            width = 2 * cfg.k_sched
            block = out[:, offset : offset + width].reshape(o, 2, cfg.k_sched)
            offset += width
            lp = torch.log_softmax(block, dim=-1)
            m_idx = torch.from_numpy(assignment.sched_m)[:, None]
            v_idx = torch.from_numpy(assignment.sched_v)[:, None]
            logp = logp + lp[:, 0, :].gather(-1, m_idx).sum()
            logp = logp + lp[:, 1, :].gather(-1, v_idx).sum()
        if self.crossover_head is not None and assignment.crossover is not None:
            logits = self.crossover_head(h.mean(dim=0))
            logp = logp + torch.log_softmax(logits, dim=0)[assignment.crossover]
        return logp


def _np(x):
    return None if x is None else x.numpy()


def _pick(
    logits: torch.Tensor, rng: np.random.Generator | None, greedy: bool
) -> tuple[torch.Tensor, torch.Tensor]:
    """Sample/argmax each trailing-dim categorical; joint log-prob of picks.

    Sampling draws one uniform per categorical through numpy so that all run
    randomness flows from the caller's seeded generator, not torch's.
    """
    flat = logits.reshape(-1, logits.shape[-1])
    log_probs = torch.log_softmax(flat, dim=1)
    if greedy:
        idx = torch.argmax(flat, dim=1)
    else:
        probs = torch.exp(log_probs).detach().numpy()
        cdf = np.cumsum(probs, axis=1)
        u = rng.random((flat.shape[0], 1))
        idx_np = (cdf < u).sum(axis=1).clip(max=flat.shape[1] - 1)
        idx = torch.from_numpy(idx_np.astype(np.int64))
    lp = log_probs.gather(1, idx[:, None]).sum()
    return idx.reshape(logits.shape[:-1]), lp


def to_proposals(
    assignment: ActionAssignment,
    graph: ComputationGraph,
    config: PolicyConfig,
    pinned_op: str | None = None,
) -> ProposalSet:
    """Dequantize an assignment into the full per-gene proposal set.

    Disabled action groups and all transfer-priority genes stay at the
    uniform Beta(1, 1); the pinned op's affinity genes are reset to uniform
    since decode forces its placement anyway.
    """
    o, d = graph.n_ops, config.devices
    n = chromosome_length(graph, d)
    alpha = np.ones(n)
    beta = np.ones(n)
    if assignment.place_m is not None:
        a, b = dequantize(assignment.place_m, assignment.place_v, config.k_place)
        alpha[: o * d] = a.reshape(-1)
        beta[: o * d] = b.reshape(-1)
    if assignment.sched_m is not None:
        a, b = dequantize(assignment.sched_m, assignment.sched_v, config.k_sched)
        alpha[o * d : o * d + o] = a
        beta[o * d : o * d + o] = b
    if pinned_op is not None:
        i = graph.op_index[pinned_op]
        alpha[i * d : (i + 1) * d] = 1.0
        beta[i * d : (i + 1) * d] = 1.0
    return ProposalSet(alpha, beta)


@dataclass
class PolicyDecision:
    assignment: ActionAssignment
    log_prob: torch.Tensor
    proposals: ProposalSet
    elite_bias: float | None


def decide(
    policy: PolicyNetwork,
    graph: ComputationGraph,
    task: str,
    brkga_feats: np.ndarray | None,
    rng: np.random.Generator | None = None,
    greedy: bool = False,
) -> PolicyDecision:
    """Full inference pipeline: multigraph -> encode -> act -> proposals."""
    mg = to_multigraph(graph, task, brkga_feats)
    h = policy.encode(mg)
    assignment, logp = policy.act(h, rng=rng, greedy=greedy)
    pinned = pinned_node(graph, task)
    proposals = to_proposals(assignment, graph, policy.config, pinned)
    elite_bias = (
        dequantize_crossover(assignment.crossover, policy.config.k_cross)
        if assignment.crossover is not None
        else None
    )
    return PolicyDecision(assignment, logp, proposals, elite_bias)


# -- checkpoints --------------------------------------------------------------


def save_checkpoint(policy: PolicyNetwork, path, dtype: str = "float64") -> None:
    if dtype not in ("float64", "float32"):
        raise ValueError("checkpoint dtype must be float64 or float32")
    state = policy.state_dict()
    names = list(state.keys())
    arrays = [state[name].detach().numpy().astype(dtype) for name in names]
    header = {
        "format_version": CHECKPOINT_VERSION,
        "arch": policy.config.to_dict(),
        "arrays": [
            {"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)}
            for name, arr in zip(names, arrays)
        ],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path) -> PolicyNetwork:
    raw = Path(path).read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a policy checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    header_len = int.from_bytes(raw[pos : pos + 4], "little")
    pos += 4
    header = json.loads(raw[pos : pos + header_len].decode("utf-8"))
    pos += header_len
    if header["format_version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header['format_version']}")
    config = PolicyConfig.from_dict(header["arch"])
    policy = PolicyNetwork(config)
    state = {}
    for meta in header["arrays"]:
        dt = np.dtype(meta["dtype"]).newbyteorder("<")
        count = int(np.prod(meta["shape"])) if meta["shape"] else 1
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=pos).reshape(meta["shape"])
        pos += arr.nbytes
        state[meta["name"]] = torch.from_numpy(arr.astype(np.float64))
    policy.load_state_dict(state)
    return policy
