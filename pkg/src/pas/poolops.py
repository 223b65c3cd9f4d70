"""Pooling operations: score nodes, keep the top-k per graph, build the coarse graph.

Two execution modes share the scoring and selection code. ``pool_discrete``
shrinks the graph to the kept nodes. ``pool_masked`` keeps every node and
zeroes the features, incident edge weights and mask of dropped nodes, so that
results of different pooling operations can be summed.
"""
from __future__ import annotations

import enum

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .aggops import gcn_propagate, neighbor_sum, weighted_degree
from .diffcore import Tensor, activation, linear
from .diffcore import ops as T
from .structure import GraphState


class PoolKind(enum.IntEnum):
    TOPKPOOL = 0
    SAGPOOL = 1
    ASAP = 2
    HOPPOOL_1 = 3
    HOPPOOL_2 = 4
    HOPPOOL_3 = 5
    MLPPOOL = 6
    GCPOOL = 7
    GAPPOOL = 8
    NONE = 9


HOP_POWERS = {PoolKind.HOPPOOL_1: 1, PoolKind.HOPPOOL_2: 2, PoolKind.HOPPOOL_3: 3}
GATED = frozenset(PoolKind) - set(HOP_POWERS) - {PoolKind.NONE}

CANDIDATE_EPS = 1e-12


def hop_scores(g, power):
    """``S_u = sum_{i<=t} sum_{v in N~(u)} (A^i)_{uv}`` with N~(u) = {v : A_uv > 0} + {u}."""
    topo = g.topo
    n = topo.num_nodes
    # copy: eliminate_zeros compacts the buffers in place
    a = sp.csr_matrix((g.weight.data, topo.col, topo.indptr), shape=(n, n), copy=True)
    a.eliminate_zeros()
    pattern = (a > 0).astype(np.float64) + sp.identity(n, format="csr")
    total = np.zeros(n)
    ai = a
    for i in range(power):
        if i:
            ai = ai @ a
        total += np.asarray(ai.multiply(pattern).sum(axis=1)).ravel()
    return total


def node_scores(kind, g, params, prefix, act="relu"):
    """Per-node scores ``(N,)`` for pooling ``kind``; HOPPOOL scores carry no gradient."""
    kind = PoolKind(kind)
    if kind is PoolKind.NONE:
        raise ValueError("NONE pooling has no score function")
    if kind in HOP_POWERS:
        return Tensor(hop_scores(g, HOP_POWERS[kind]))
    sigma = activation(act)
    h = g.h
    d = h.shape[1]
    p = f"{prefix}.{kind.name}"
    if kind is PoolKind.TOPKPOOL:
        proj = params.glorot(f"{p}.p", d, 1, shape=(d,))
        s = T.matmul(h, proj) / (T.tsum(proj * proj) ** 0.5)
    elif kind is PoolKind.SAGPOOL:
        xw = linear(h, params, f"{p}.lin", d, 1, bias=False)
        s = gcn_propagate(g, xw) + params.zeros(f"{p}.b", (1,))
    elif kind is PoolKind.ASAP:
        own = linear(h, params, f"{p}.W1", d, 1)
        center = linear(h, params, f"{p}.W2", d, 1, bias=False)
        nbr = linear(h, params, f"{p}.W3", d, 1, bias=False)
        deg = T.reshape(weighted_degree(g), (-1, 1))
        s = T.sigmoid(own + deg * center - neighbor_sum(g, nbr))
    elif kind is PoolKind.MLPPOOL:
        hidden = sigma(linear(h, params, f"{p}.mlp0", d, d))
        s = sigma(linear(hidden, params, f"{p}.mlp1", d, 1))
    elif kind is PoolKind.GCPOOL:
        s = (linear(h, params, f"{p}.root", d, 1)
             + linear(neighbor_sum(g, h), params, f"{p}.neigh", d, 1, bias=False))
    else:  # GAPPOOL
        w = params.glorot(f"{p}.w", d, 1, shape=(d,))
        topo = g.topo
        diff = T.gather_rows(h, topo.row) - T.gather_rows(h, topo.col)
        present = (g.weight.data > 0).astype(np.float64)[:, None]
        spread = T.segment_sum(diff * diff * present, topo.indptr)
        s = T.matmul(spread, w) * 0.5
    return T.reshape(s, (-1,))


def top_k_select(scores, mask, ratio, ptr):
    """Sorted node indices of the top ``max(1, ceil(ratio * candidates))`` per graph.

    Candidates are nodes with mask above 1e-12; ties go to the lower index.
    """
    if not 0 < ratio <= 1:
        raise ValueError(f"pooling ratio must lie in (0, 1], got {ratio}")
    scores = scores.data if isinstance(scores, Tensor) else np.asarray(scores, dtype=np.float64)
    mask = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=np.float64)
    sel = _kernels.topk_select(scores, mask > CANDIDATE_EPS, ptr, float(ratio))
    return np.flatnonzero(sel)


def _gate(kind, scores):
    return T.tanh(scores) if PoolKind(kind) in GATED else None


def pool_discrete(kind, g, idx, scores):
    """Coarse graph on the kept nodes ``idx``: ``A[idx, idx]`` and gated ``H[idx]``."""
    kind = PoolKind(kind)
    if kind is PoolKind.NONE:
        return g
    topo, keep = g.topo.restrict(idx)
    h = T.gather_rows(g.h, idx)
    gate = _gate(kind, scores)
    if gate is not None:
        h = h * T.reshape(T.gather_rows(gate, idx), (-1, 1))
    return GraphState(topo, T.gather_rows(g.weight, keep), h, T.gather_rows(g.mask, idx))


def pool_masked(kind, g, idx, scores):
    """Shape-preserving coarse graph: dropped nodes keep their slot with zero
    features, zero incident edge weights and zero mask."""
    kind = PoolKind(kind)
    if kind is PoolKind.NONE:
        return g
    keep = np.zeros(g.topo.num_nodes)
    keep[idx] = 1.0
    gate = _gate(kind, scores)
    row_scale = Tensor(keep) if gate is None else T.mul(keep, gate)
    h = g.h * T.reshape(row_scale, (-1, 1))
    edge_keep = keep[g.topo.row] * keep[g.topo.col]
    return GraphState(g.topo, g.weight * edge_keep, h, g.mask * keep)


def pool(kind, g, params, prefix, ratio, masked, act="relu"):
    """Score, select and coarsen in one call; returns ``(state, idx, scores)``."""
    kind = PoolKind(kind)
    if kind is PoolKind.NONE:
        return g, np.arange(g.topo.num_nodes), None
    scores = node_scores(kind, g, params, prefix, act)
    idx = top_k_select(scores, g.mask, ratio, g.topo.ptr)
    fn = pool_masked if masked else pool_discrete
    return fn(kind, g, idx, scores), idx, scores
