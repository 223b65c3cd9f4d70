"""Graph state threaded through a forward pass.

A ``Topology`` is the fixed sparsity pattern of a batch (CSR over destination
rows). A ``GraphState`` pairs it with differentiable edge weights, node
features and the soft node mask. Shape-preserving pooling only rewrites the
weights, features and mask; discrete pooling builds a smaller topology.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .diffcore import Tensor
from .diffcore import ops as T


class Topology:
    def __init__(self, ptr, row, col):
        self.ptr = np.asarray(ptr, dtype=np.int64)
        self.row = np.asarray(row, dtype=np.int64)
        self.col = np.asarray(col, dtype=np.int64)
        n = int(self.ptr[-1])
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.row, minlength=n), out=self.indptr[1:])

    @property
    def num_nodes(self):
        return int(self.ptr[-1])

    @property
    def num_graphs(self):
        return len(self.ptr) - 1

    @property
    def num_edges(self):
        return len(self.row)

    @cached_property
    def membership(self):
        return np.repeat(np.arange(self.num_graphs), np.diff(self.ptr))

    @cached_property
    def with_self_loops(self):
        """Edge list extended by one self loop per node, still sorted by (row, col).

        Returns ``(indptr, row, col, pos)`` where ``pos`` indexes the original
        edge array, or equals ``num_edges`` for the added self loops.
        """
        n, e = self.num_nodes, self.num_edges
        nodes = np.arange(n)
        row = np.concatenate([self.row, nodes])
        col = np.concatenate([self.col, nodes])
        pos = np.concatenate([np.arange(e), np.full(n, e)])
        order = np.lexsort((col, row))
        row, col, pos = row[order], col[order], pos[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(row, minlength=n), out=indptr[1:])
        return indptr, row, col, pos

    def restrict(self, idx):
        """Topology induced on sorted node indices ``idx`` and the kept edge positions."""
        idx = np.asarray(idx, dtype=np.int64)
        sel = np.zeros(self.num_nodes, dtype=bool)
        sel[idx] = True
        keep = np.flatnonzero(sel[self.row] & sel[self.col])
        newid = np.full(self.num_nodes, -1, dtype=np.int64)
        newid[idx] = np.arange(len(idx))
        counts = np.bincount(self.membership[idx], minlength=self.num_graphs)
        ptr = np.zeros(self.num_graphs + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        return Topology(ptr, newid[self.row[keep]], newid[self.col[keep]]), keep


@dataclass
class GraphState:
    topo: Topology
    weight: Tensor
    h: Tensor
    mask: Tensor

    @classmethod
    def from_batch(cls, batch, h=None):
        topo = Topology(batch.ptr, batch.row, batch.col)
        return cls(topo, Tensor(batch.weight), Tensor(batch.feat) if h is None else h,
                   Tensor(batch.mask))

    @property
    def active(self):
        return self.mask.data > 0

    def mask_column(self):
        return T.reshape(self.mask, (-1, 1))

    def dense_adjacency(self):
        n = self.topo.num_nodes
        a = np.zeros((n, n))
        a[self.topo.row, self.topo.col] = self.weight.data
        return a
