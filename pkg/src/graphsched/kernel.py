"""Compiled fast path for chromosome evaluation (numba).

The GA inner loop evaluates tens of thousands of chromosomes per run, so
decode + simulate is fused into one nopython kernel over flat arrays.  The
semantics mirror ``simulator.simulate`` exactly (equivalence is enforced by
tests); only the trace is omitted.

Graph encoding (GraphArrays): ops and tensors are dense indices.  Consumer
edges are stored CSR-style grouped by tensor; op inputs/outputs likewise
grouped by op.  Extended nodes are numbered 0..o-1 for the original ops,
then transfers in (tensor, destination device) order -- the same numbering
the pure decoder uses, because scheduling ties break on this index.

If numba is unavailable everything here stays importable and ``AVAILABLE``
is False; callers fall back to the pure path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    from numba import njit

    AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    AVAILABLE = False

    def njit(*_args, **_kwargs):
        def deco(fn):
            return fn

        return deco


TASK_CODE_PEAK_MEMORY = 0
TASK_CODE_RUNTIME = 1


@dataclass(frozen=True)
class GraphArrays:
    """Flat, kernel-ready encoding of a ComputationGraph."""

    o: int
    t: int
    duration: np.ndarray  # (o,) float64
    internal: np.ndarray  # (o,) int64
    size: np.ndarray  # (t,) int64
    producer: np.ndarray  # (t,) int32
    cons_indptr: np.ndarray  # (t+1,) int32
    cons_op: np.ndarray  # (E,) int32
    in_indptr: np.ndarray  # (o+1,) int32
    in_tensor: np.ndarray  # (E,) int32
    out_indptr: np.ndarray  # (o+1,) int32
    out_tensor: np.ndarray  # (t,) int32


def build_arrays(graph) -> GraphArrays:
    o, t = graph.n_ops, graph.n_tensors
    duration = np.array([op.duration for op in graph.ops], dtype=np.float64)
    internal = np.array([op.internal_memory for op in graph.ops], dtype=np.int64)
    size = np.array([tensor.size for tensor in graph.tensors], dtype=np.int64)
    producer = np.array(
        [graph.op_index[tensor.producer] for tensor in graph.tensors], dtype=np.int32
    )

    cons_indptr = np.zeros(t + 1, dtype=np.int32)
    cons_flat: list[int] = []
    for ti in range(t):
        for ci, _control in graph.tensor_consumers[ti]:
            cons_flat.append(ci)
        cons_indptr[ti + 1] = len(cons_flat)
    cons_op = np.array(cons_flat, dtype=np.int32)

    in_indptr = np.zeros(o + 1, dtype=np.int32)
    in_flat: list[int] = []
    out_indptr = np.zeros(o + 1, dtype=np.int32)
    out_flat: list[int] = []
    for i in range(o):
        in_flat.extend(graph.op_inputs[i])
        in_indptr[i + 1] = len(in_flat)
        out_flat.extend(graph.op_outputs[i])
        out_indptr[i + 1] = len(out_flat)

    return GraphArrays(
        o=o,
        t=t,
        duration=duration,
        internal=internal,
        size=size,
        producer=producer,
        cons_indptr=cons_indptr,
        cons_op=np.asarray(cons_op, dtype=np.int32),
        in_indptr=in_indptr,
        in_tensor=np.array(in_flat, dtype=np.int32),
        out_indptr=out_indptr,
        out_tensor=np.array(out_flat, dtype=np.int32),
    )


@njit(cache=True, nogil=True)
def _place_from_genes(chrom, o, d, pinned):
    place = np.empty(o, np.int32)
    for i in range(o):
        base = i * d
        best = 0
        for k in range(1, d):
            if chrom[base + k] > chrom[base + best]:
                best = k
        place[i] = best
    if pinned >= 0:
        place[pinned] = 0
    return place


@njit(cache=True, nogil=True)
def _build_extended(place, d, o, t, producer, cons_indptr, cons_op):
    """Transfers, consumer counts, and the extended DAG for one placement."""
    cnt = np.zeros((t, d), np.int32)
    need = np.zeros((t, d), np.uint8)
    for tau in range(t):
        pd = place[producer[tau]]
        for e in range(cons_indptr[tau], cons_indptr[tau + 1]):
            cd = place[cons_op[e]]
            cnt[tau, cd] += 1
            if cd != pd:
                need[tau, cd] = 1

    nt = 0
    trans_id = np.full((t, d), -1, np.int32)
    for tau in range(t):
        for k in range(d):
            if need[tau, k]:
                trans_id[tau, k] = o + nt
                nt += 1
    trans_tensor = np.empty(nt, np.int32)
    trans_dst = np.empty(nt, np.int32)
    trans_cnt = np.zeros(t, np.int32)
    for tau in range(t):
        for k in range(d):
            j = trans_id[tau, k]
            if j >= 0:
                trans_tensor[j - o] = tau
                trans_dst[j - o] = k
                trans_cnt[tau] += 1

    n = o + nt
    outdeg = np.zeros(n, np.int32)
    indeg = np.zeros(n, np.int32)
    for tau in range(t):
        p = producer[tau]
        pd = place[p]
        for k in range(d):
            if trans_id[tau, k] >= 0:
                outdeg[p] += 1
                indeg[trans_id[tau, k]] += 1
        for e in range(cons_indptr[tau], cons_indptr[tau + 1]):
            c = cons_op[e]
            cd = place[c]
            src = p if cd == pd else trans_id[tau, cd]
            outdeg[src] += 1
            indeg[c] += 1

    adj_indptr = np.zeros(n + 1, np.int32)
    for v in range(n):
        adj_indptr[v + 1] = adj_indptr[v] + outdeg[v]
    adj = np.empty(adj_indptr[n], np.int32)
    fill = adj_indptr[:n].copy()
    for tau in range(t):
        p = producer[tau]
        pd = place[p]
        for k in range(d):
            j = trans_id[tau, k]
            if j >= 0:
                adj[fill[p]] = j
                fill[p] += 1
        for e in range(cons_indptr[tau], cons_indptr[tau + 1]):
            c = cons_op[e]
            cd = place[c]
            src = p if cd == pd else trans_id[tau, cd]
            adj[fill[src]] = c
            fill[src] += 1

    return nt, trans_tensor, trans_dst, trans_cnt, cnt, adj_indptr, adj, indeg


@njit(cache=True, nogil=True)
def _schedule_by_priority(pri, indeg0, adj_indptr, adj):
    """Kahn topological order; among ready nodes the highest priority runs
    first, ties to the lowest extended index (binary heap)."""
    n = pri.shape[0]
    indeg = indeg0.copy()
    heap_p = np.empty(n, np.float64)
    heap_i = np.empty(n, np.int32)
    hs = 0
    order = np.empty(n, np.int32)

    for v in range(n):
        if indeg[v] == 0:
            # push v
            heap_p[hs] = pri[v]
            heap_i[hs] = v
            hs += 1
            c = hs - 1
            while c > 0:
                p = (c - 1) // 2
                if heap_p[c] > heap_p[p] or (
                    heap_p[c] == heap_p[p] and heap_i[c] < heap_i[p]
                ):
                    heap_p[c], heap_p[p] = heap_p[p], heap_p[c]
                    heap_i[c], heap_i[p] = heap_i[p], heap_i[c]
                    c = p
                else:
                    break

    for step in range(n):
        if hs == 0:
            raise ValueError("dependency cycle in extended graph")
        v = heap_i[0]
        order[step] = v
        hs -= 1
        heap_p[0] = heap_p[hs]
        heap_i[0] = heap_i[hs]
        c = 0
        while True:
            left = 2 * c + 1
            if left >= hs:
                break
            pick = left
            right = left + 1
            if right < hs and (
                heap_p[right] > heap_p[left]
                or (heap_p[right] == heap_p[left] and heap_i[right] < heap_i[left])
            ):
                pick = right
            if heap_p[pick] > heap_p[c] or (
                heap_p[pick] == heap_p[c] and heap_i[pick] < heap_i[c]
            ):
                heap_p[c], heap_p[pick] = heap_p[pick], heap_p[c]
                heap_i[c], heap_i[pick] = heap_i[pick], heap_i[c]
                c = pick
            else:
                break
        for e in range(adj_indptr[v], adj_indptr[v + 1]):
            w = adj[e]
            indeg[w] -= 1
            if indeg[w] == 0:
                heap_p[hs] = pri[w]
                heap_i[hs] = w
                hs += 1
                c = hs - 1
                while c > 0:
                    p = (c - 1) // 2
                    if heap_p[c] > heap_p[p] or (
                        heap_p[c] == heap_p[p] and heap_i[c] < heap_i[p]
                    ):
                        heap_p[c], heap_p[p] = heap_p[p], heap_p[c]
                        heap_i[c], heap_i[p] = heap_i[p], heap_i[c]
                        c = p
                    else:
                        break
    return order


@njit(cache=True, nogil=True)
def _simulate_ext(
    order,
    place,
    d,
    o,
    duration,
    internal,
    size,
    producer,
    in_indptr,
    in_tensor,
    out_indptr,
    out_tensor,
    trans_tensor,
    trans_dst,
    trans_cnt,
    cnt,
    adj_indptr,
    adj,
    latency,
    bw_inv,
):
    """Memory/makespan accounting along a valid extended-graph order."""
    n = order.shape[0]
    t = size.shape[0]
    clk = np.zeros(d, np.float64)
    ready = np.zeros(n, np.float64)
    mem = np.zeros(d, np.int64)
    peak = np.zeros(d, np.int64)
    rem = np.zeros((t, d), np.int32)

    for s in range(n):
        v = order[s]
        if v < o:
            dev = place[v]
            for q in range(out_indptr[v], out_indptr[v + 1]):
                tau = out_tensor[q]
                mem[dev] += size[tau]
                rem[tau, dev] = cnt[tau, dev] + trans_cnt[tau]
            usage = mem[dev] + internal[v]
            if usage > peak[dev]:
                peak[dev] = usage
            st = clk[dev] if clk[dev] > ready[v] else ready[v]
            fin = st + duration[v]
            clk[dev] = fin
            for q in range(in_indptr[v], in_indptr[v + 1]):
                tau = in_tensor[q]
                rem[tau, dev] -= 1
                if rem[tau, dev] == 0:
                    mem[dev] -= size[tau]
        else:
            j = v - o
            tau = trans_tensor[j]
            src = place[producer[tau]]
            dst = trans_dst[j]
            mem[dst] += size[tau]
            rem[tau, dst] = cnt[tau, dst]
            if mem[src] > peak[src]:
                peak[src] = mem[src]
            if mem[dst] > peak[dst]:
                peak[dst] = mem[dst]
            st = clk[src]
            if clk[dst] > st:
                st = clk[dst]
            if ready[v] > st:
                st = ready[v]
            fin = st + latency + size[tau] * bw_inv
            clk[src] = fin
            clk[dst] = fin
            rem[tau, src] -= 1
            if rem[tau, src] == 0:
                mem[src] -= size[tau]
        for e in range(adj_indptr[v], adj_indptr[v + 1]):
            w = adj[e]
            if fin > ready[w]:
                ready[w] = fin

    makespan = 0.0
    for k in range(d):
        if clk[k] > makespan:
            makespan = clk[k]
    return peak, makespan


@njit(cache=True, nogil=True)
def _objective(peak, makespan, d, capacity, task_code):
    """(class, objective): class 0 = feasible, 1 = over capacity."""
    if task_code == TASK_CODE_RUNTIME:
        excess = 0.0
        for k in range(d):
            over = peak[k] - capacity
            if over > 0.0:
                excess += over
        if excess > 0.0:
            return 1, excess
        return 0, makespan
    mx = np.int64(0)
    for k in range(d):
        if peak[k] > mx:
            mx = peak[k]
    return 0, float(mx)


@njit(cache=True, nogil=True)
def _evaluate_chromosome(
    chrom,
    d,
    o,
    t,
    pinned,
    duration,
    internal,
    size,
    producer,
    cons_indptr,
    cons_op,
    in_indptr,
    in_tensor,
    out_indptr,
    out_tensor,
    latency,
    bw_inv,
    capacity,
    task_code,
):
    place = _place_from_genes(chrom, o, d, pinned)
    nt, trans_tensor, trans_dst, trans_cnt, cnt, adj_indptr, adj, indeg = _build_extended(
        place, d, o, t, producer, cons_indptr, cons_op
    )
    n = o + nt
    pri = np.empty(n, np.float64)
    for i in range(o):
        pri[i] = chrom[o * d + i]
    for j in range(nt):
        pri[o + j] = chrom[o * d + o + trans_tensor[j] * d + trans_dst[j]]
    order = _schedule_by_priority(pri, indeg, adj_indptr, adj)
    peak, makespan = _simulate_ext(
        order,
        place,
        d,
        o,
        duration,
        internal,
        size,
        producer,
        in_indptr,
        in_tensor,
        out_indptr,
        out_tensor,
        trans_tensor,
        trans_dst,
        trans_cnt,
        cnt,
        adj_indptr,
        adj,
        latency,
        bw_inv,
    )
    return _objective(peak, makespan, d, capacity, task_code)


@njit(cache=True, nogil=True)
def _decode_placement_positions(chrom, d, o, t, pinned, producer, cons_indptr, cons_op):
    """Placement plus each op's normalized position among original ops."""
    place = _place_from_genes(chrom, o, d, pinned)
    nt, trans_tensor, trans_dst, _trans_cnt, _cnt, adj_indptr, adj, indeg = _build_extended(
        place, d, o, t, producer, cons_indptr, cons_op
    )
    n = o + nt
    pri = np.empty(n, np.float64)
    for i in range(o):
        pri[i] = chrom[o * d + i]
    for j in range(nt):
        pri[o + j] = chrom[o * d + o + trans_tensor[j] * d + trans_dst[j]]
    order = _schedule_by_priority(pri, indeg, adj_indptr, adj)
    pos = np.zeros(o, np.float64)
    rank = 0
    for s in range(n):
        v = order[s]
        if v < o:
            pos[v] = rank
            rank += 1
    if o > 1:
        for i in range(o):
            pos[i] /= o - 1
    return place, pos


@njit(cache=True, nogil=True)
def _best_over_orders(
    place,
    d,
    o,
    duration,
    internal,
    size,
    producer,
    in_indptr,
    in_tensor,
    out_indptr,
    out_tensor,
    trans_tensor,
    trans_dst,
    trans_cnt,
    cnt,
    adj_indptr,
    adj,
    indeg0,
    latency,
    bw_inv,
    capacity,
    task_code,
    pair_cap,
):
    """Enumerate every topological order of the extended graph by iterative
    backtracking, returning the best (class, objective) and a witness order.

    Returns status -1 when more than ``pair_cap`` complete orders would be
    visited; the caller treats that as a capability error.
    """
    n = adj_indptr.shape[0] - 1
    indeg = indeg0.copy()
    scheduled = np.zeros(n, np.uint8)
    order = np.empty(n, np.int32)
    choice = np.full(n, -1, np.int32)
    best_class = np.int64(2)
    best_obj = np.inf
    best_order = np.zeros(n, np.int32)
    visited = 0

    if n == 0:
        return 0, np.int64(0), 0.0, best_order, 0

    depth = 0
    while depth >= 0:
        nxt = -1
        for v in range(choice[depth] + 1, n):
            if indeg[v] == 0 and scheduled[v] == 0:
                nxt = v
                break
        if nxt < 0:
            choice[depth] = -1
            depth -= 1
            if depth >= 0:
                c = order[depth]
                scheduled[c] = 0
                for e in range(adj_indptr[c], adj_indptr[c + 1]):
                    indeg[adj[e]] += 1
            continue
        choice[depth] = nxt
        order[depth] = nxt
        scheduled[nxt] = 1
        for e in range(adj_indptr[nxt], adj_indptr[nxt + 1]):
            indeg[adj[e]] -= 1
        if depth == n - 1:
            visited += 1
            if visited > pair_cap:
                return -1, best_class, best_obj, best_order, visited
            peak, makespan = _simulate_ext(
                order,
                place,
                d,
                o,
                duration,
                internal,
                size,
                producer,
                in_indptr,
                in_tensor,
                out_indptr,
                out_tensor,
                trans_tensor,
                trans_dst,
                trans_cnt,
                cnt,
                adj_indptr,
                adj,
                latency,
                bw_inv,
            )
            cls, obj = _objective(peak, makespan, d, capacity, task_code)
            if cls < best_class or (cls == best_class and obj < best_obj):
                best_class = np.int64(cls)
                best_obj = obj
                best_order[:] = order
            scheduled[nxt] = 0
            for e in range(adj_indptr[nxt], adj_indptr[nxt + 1]):
                indeg[adj[e]] += 1
        else:
            depth += 1
    return 0, best_class, best_obj, best_order, visited
