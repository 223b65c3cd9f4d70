"""The six aggregation operations of the search space.

Every operation reads the (possibly weighted, possibly masked) graph state and
returns new node features of width ``out_dim``. Edge weights scale messages,
and the output is multiplied by the node mask so zero-mask nodes stay zero.
"""
from __future__ import annotations

import enum

import numpy as np

from .diffcore import activation, linear
from .diffcore import ops as T


class AggKind(enum.IntEnum):
    GCN = 0
    GAT = 1
    SAGE = 2
    GIN = 3
    GRAPHCONV = 4
    MLP = 5


def neighbor_sum(g, x):
    """``sum_u A[v, u] x_u`` for every node v."""
    return T.spmm(g.weight, g.topo.indptr, g.topo.col, x)


def weighted_degree(g):
    return T.segment_sum(g.weight, g.topo.indptr)


def gcn_propagate(g, x):
    """Symmetric-normalized propagation with self loops: ``D^-1/2 (A+I) D^-1/2 x``."""
    topo = g.topo
    deg = weighted_degree(g) + 1.0
    dinv = deg ** -0.5
    norm = g.weight * T.gather_rows(dinv, topo.row) * T.gather_rows(dinv, topo.col)
    return T.spmm(norm, topo.indptr, topo.col, x) + x * T.reshape(1.0 / deg, (-1, 1))


def _gat(g, h, params, prefix, in_dim, out_dim):
    z = linear(h, params, f"{prefix}.lin", in_dim, out_dim, bias=False)
    a_src = params.glorot(f"{prefix}.att_src", 2 * out_dim, 1, shape=(out_dim,))
    a_dst = params.glorot(f"{prefix}.att_dst", 2 * out_dim, 1, shape=(out_dim,))
    indptr, row, col, pos = g.topo.with_self_loops
    w_ext = T.gather_rows(T.concat([g.weight, np.ones(1)]), pos)
    logits = T.leaky_relu(T.gather_rows(T.matmul(z, a_src), col)
                          + T.gather_rows(T.matmul(z, a_dst), row), 0.2)
    att = T.segment_softmax(logits, indptr, w_ext.data > 0)
    out = T.spmm(att * w_ext, indptr, col, z)
    return out + params.zeros(f"{prefix}.b", (out_dim,))


def aggregate(kind, g, params, prefix, out_dim, act="relu"):
    """Apply aggregation ``kind`` to graph state ``g``; returns ``(N, out_dim)``."""
    kind = AggKind(kind)
    sigma = activation(act)
    h = g.h
    in_dim = h.shape[1]
    p = f"{prefix}.{kind.name}"
    if kind is AggKind.GCN:
        xw = linear(h, params, f"{p}.lin", in_dim, out_dim, bias=False)
        out = sigma(gcn_propagate(g, xw) + params.zeros(f"{p}.b", (out_dim,)))
    elif kind is AggKind.GAT:
        out = sigma(_gat(g, h, params, p, in_dim, out_dim))
    elif kind is AggKind.SAGE:
        denom = T.clamp_min(weighted_degree(g), 1e-12)
        mean = neighbor_sum(g, h) / T.reshape(denom, (-1, 1))
        out = sigma(linear(h, params, f"{p}.root", in_dim, out_dim)
                    + linear(mean, params, f"{p}.neigh", in_dim, out_dim, bias=False))
    elif kind is AggKind.GIN:
        eps = params.zeros(f"{p}.eps", (1,))
        s = h * (eps + 1.0) + neighbor_sum(g, h)
        hidden = sigma(linear(s, params, f"{p}.mlp0", in_dim, out_dim))
        out = linear(hidden, params, f"{p}.mlp1", out_dim, out_dim)
    elif kind is AggKind.GRAPHCONV:
        out = sigma(linear(h, params, f"{p}.root", in_dim, out_dim)
                    + linear(neighbor_sum(g, h), params, f"{p}.neigh", in_dim, out_dim, bias=False))
    else:
        hidden = sigma(linear(h, params, f"{p}.mlp0", in_dim, out_dim))
        out = sigma(linear(hidden, params, f"{p}.mlp1", out_dim, out_dim))
    out = out * g.mask_column()
    if not np.isfinite(out.data).all():
        raise FloatingPointError(f"aggregation {kind.name} produced non-finite output")
    return out
