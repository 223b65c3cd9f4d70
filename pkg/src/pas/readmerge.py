"""Readout, merge and classification head.

Readouts reduce each graph's active nodes (mask > 0) to a ``d``-vector;
merges combine the per-layer vectors ``z^0..z^L`` into one ``d``-vector.
Operations with wider natural outputs (sort pooling, set2set, concatenation)
end in a learned projection back to ``d``.
"""
from __future__ import annotations

import enum

import numpy as np

from . import _kernels
from .diffcore import Tensor, cross_entropy, linear, lstm_cell
from .diffcore import ops as T


class ReadoutKind(enum.IntEnum):
    GLOBAL_SORT = 0
    GLOBAL_ATT = 1
    SET2SET = 2
    GLOBAL_MEAN = 3
    GLOBAL_MAX = 4
    GLOBAL_SUM = 5
    ZERO = 6


class MergeKind(enum.IntEnum):
    M_LSTM = 0
    M_CONCAT = 1
    M_MAX = 2
    M_MEAN = 3
    M_SUM = 4


def readout(kind, g, params, prefix, sort_k=10, set2set_steps=2):
    """Per-graph vectors ``(B, d)`` from graph state ``g``."""
    kind = ReadoutKind(kind)
    topo = g.topo
    h = g.h
    d = h.shape[1]
    ptr = topo.ptr
    p = f"{prefix}.{kind.name}"
    if kind is ReadoutKind.ZERO:
        return Tensor(np.zeros((topo.num_graphs, d)))
    if kind is ReadoutKind.GLOBAL_SUM:
        return T.segment_sum(h, ptr)
    if kind is ReadoutKind.GLOBAL_MEAN:
        total = T.segment_sum(h * g.mask_column(), ptr)
        count = T.clamp_min(T.segment_sum(g.mask, ptr), 1e-12)
        return total / T.reshape(count, (-1, 1))
    if kind is ReadoutKind.GLOBAL_MAX:
        return T.segment_max(h, ptr, g.active)
    if kind is ReadoutKind.GLOBAL_ATT:
        gate_w = params.glorot(f"{p}.gate", d, 1, shape=(d,))
        gate_b = params.zeros(f"{p}.gate_b", (1,))
        gate = T.sigmoid(T.matmul(h, gate_w) + gate_b) * g.mask
        value = linear(h, params, f"{p}.W", d, d, bias=False)
        return T.segment_sum(value * T.reshape(gate, (-1, 1)), ptr)
    if kind is ReadoutKind.SET2SET:
        b = topo.num_graphs
        q_star = Tensor(np.zeros((b, 2 * d)))
        hs = Tensor(np.zeros((b, d)))
        cs = Tensor(np.zeros((b, d)))
        active = g.active
        for _ in range(set2set_steps):
            hs, cs = lstm_cell(q_star, hs, cs, params, f"{p}.lstm", 2 * d, d)
            e = T.tsum(h * T.gather_rows(hs, topo.membership), axis=1)
            a = T.segment_softmax(e, ptr, active)
            r = T.segment_sum(h * T.reshape(a, (-1, 1)), ptr)
            q_star = T.concat([hs, r], axis=1)
        return linear(q_star, params, f"{p}.proj", 2 * d, d)
    # GLOBAL_SORT: order active nodes by the last channel, descending
    idx = _kernels.sort_index(h.data[:, -1], g.active, ptr, sort_k)
    rows = T.gather_rows(h, idx.reshape(-1), fill_missing=True)
    flat = T.reshape(rows, (topo.num_graphs, sort_k * d))
    return linear(flat, params, f"{p}.proj", sort_k * d, d)


def merge(kind, zs, params, prefix):
    """Combine the per-layer graph vectors ``zs`` (each ``(B, d)``)."""
    kind = MergeKind(kind)
    dims = {z.shape[1] for z in zs}
    if len(dims) != 1:
        raise ValueError(f"merge inputs have differing dimensions {sorted(dims)}")
    d = dims.pop()
    p = f"{prefix}.{kind.name}"
    if kind is MergeKind.M_SUM or kind is MergeKind.M_MEAN:
        out = zs[0]
        for z in zs[1:]:
            out = out + z
        return out * (1.0 / len(zs)) if kind is MergeKind.M_MEAN else out
    if kind is MergeKind.M_MAX:
        return T.max_axis(T.stack(zs, axis=0), axis=0)
    if kind is MergeKind.M_CONCAT:
        return linear(T.concat(zs, axis=1), params, f"{p}.proj", len(zs) * d, d)
    b = zs[0].shape[0]
    hs = Tensor(np.zeros((b, d)))
    cs = Tensor(np.zeros((b, d)))
    for z in zs:
        hs, cs = lstm_cell(z, hs, cs, params, f"{p}.lstm", d, d)
    return hs


def classify(z, params, num_classes, prefix="classifier"):
    return linear(z, params, prefix, z.shape[1], num_classes)


def xent_loss(logits, labels):
    return cross_entropy(logits, labels)
