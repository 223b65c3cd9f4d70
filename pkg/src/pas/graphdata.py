"""Graph-classification datasets: TU-format I/O, synthetic generators,
block-diagonal batching and stratified splits."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    adj: np.ndarray
    feat: np.ndarray
    label: int

    @property
    def n(self):
        return self.adj.shape[0]

    @cached_property
    def edges(self):
        """``(rows, cols, weights)`` of the nonzero adjacency entries, row-major."""
        r, c = np.nonzero(self.adj)
        return r.astype(np.int64), c.astype(np.int64), self.adj[r, c].astype(np.float64)

    def same_as(self, other):
        return (self.label == other.label
                and np.array_equal(self.adj, other.adj)
                and np.array_equal(self.feat, other.feat))


@dataclass
class Dataset:
    name: str
    graphs: list
    num_classes: int = field(init=False)
    num_features: int = field(init=False)

    def __post_init__(self):
        if not self.graphs:
            raise DatasetError(f"dataset {self.name!r} is empty")
        dims = {g.feat.shape[1] for g in self.graphs}
        if len(dims) != 1:
            raise DatasetError(f"graphs in {self.name!r} have differing feature dims {sorted(dims)}")
        labels = sorted({g.label for g in self.graphs})
        if labels != list(range(len(labels))):
            raise DatasetError(f"labels of {self.name!r} are not contiguous from 0: {labels}")
        self.num_classes = len(labels)
        self.num_features = dims.pop()

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    @property
    def labels(self):
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def subset(self, idx):
        return [self.graphs[i] for i in idx]


# --------------------------------------------------------------------------
# batching

class GraphBatch:
    """Block-diagonal union of graphs stored as a row-sorted sparse edge list.

    ``indptr``/``col`` are CSR over destination rows, ``row`` repeats each
    entry's row, and ``weight`` holds the adjacency values ``A[row, col]``.
    """

    def __init__(self, ptr, feat, labels, row, col, weight, mask=None):
        self.ptr = np.asarray(ptr, dtype=np.int64)
        self.feat = np.asarray(feat, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.row = np.asarray(row, dtype=np.int64)
        self.col = np.asarray(col, dtype=np.int64)
        self.weight = np.asarray(weight, dtype=np.float64)
        n = self.num_nodes
        self.mask = np.ones(n) if mask is None else np.asarray(mask, dtype=np.float64)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.row, minlength=n), out=self.indptr[1:])

    @property
    def num_graphs(self):
        return len(self.ptr) - 1

    @property
    def num_nodes(self):
        return int(self.ptr[-1])

    @cached_property
    def membership(self):
        return np.repeat(np.arange(self.num_graphs), np.diff(self.ptr))

    def dense_adjacency(self):
        n = self.num_nodes
        a = np.zeros((n, n))
        a[self.row, self.col] = self.weight
        return a

    def graph(self, g):
        """Extract graph ``g`` back out of the batch."""
        lo, hi = self.ptr[g], self.ptr[g + 1]
        keep = (self.row >= lo) & (self.row < hi)
        adj = np.zeros((hi - lo, hi - lo))
        adj[self.row[keep] - lo, self.col[keep] - lo] = self.weight[keep]
        return Graph(adj, self.feat[lo:hi].copy(), int(self.labels[g]))


def make_batch(graphs):
    if not graphs:
        raise ValueError("cannot batch an empty list of graphs")
    dims = {g.feat.shape[1] for g in graphs}
    if len(dims) != 1:
        raise ValueError(f"graphs have mismatched feature dims {sorted(dims)}")
    sizes = np.array([g.n for g in graphs], dtype=np.int64)
    ptr = np.zeros(len(graphs) + 1, dtype=np.int64)
    np.cumsum(sizes, out=ptr[1:])
    rows, cols, ws = [], [], []
    for off, g in zip(ptr[:-1], graphs):
        r, c, w = g.edges
        rows.append(r + off)
        cols.append(c + off)
        ws.append(w)
    return GraphBatch(
        ptr,
        np.concatenate([g.feat for g in graphs], axis=0),
        [g.label for g in graphs],
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(ws),
    )


# --------------------------------------------------------------------------
# TU format

def _read_lines(path):
    with open(path) as fh:
        return [ln.strip() for ln in fh]


def _parse_ints(path, lines, width=None):
    out = []
    for lineno, ln in enumerate(lines, 1):
        if not ln:
            continue
        parts = [p for p in ln.replace(",", " ").split()]
        try:
            vals = [int(float(p)) for p in parts]
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: cannot parse integers from {ln!r}") from None
        if width is not None and len(vals) != width:
            raise DatasetError(f"{path}:{lineno}: expected {width} values, got {len(vals)}")
        out.append((lineno, vals))
    return out


def load_tu_dataset(directory, name, use_node_attributes=False, featureless="constant"):
    """Read a TU-format dataset (1-indexed text files) into 0-indexed graphs.

    Node labels are one-hot encoded in ascending label order. Attributes are
    appended when ``use_node_attributes`` is set, and are always used when the
    dataset has no node labels. Datasets with neither get a constant feature
    1.0 (or the node degree with ``featureless="degree"``).
    """
    def path(suffix):
        return os.path.join(directory, f"{name}_{suffix}.txt")

    for req in ("A", "graph_indicator", "graph_labels"):
        if not os.path.exists(path(req)):
            raise DatasetError(f"missing required file {path(req)}")

    ind_path = path("graph_indicator")
    indicator = np.array([v[0] for _, v in _parse_ints(ind_path, _read_lines(ind_path), 1)],
                         dtype=np.int64)
    if len(indicator) == 0:
        raise DatasetError(f"{ind_path}: no nodes")
    gids = np.unique(indicator)
    if gids[0] != 1 or gids[-1] != len(gids):
        missing = sorted(set(range(1, gids[-1] + 1)) - set(gids.tolist()))
        raise DatasetError(f"{ind_path}: graph ids must run 1..G without gaps; "
                           f"missing {missing[:5]}" if missing else f"{ind_path}: graph ids must start at 1")
    n_graphs = len(gids)
    gidx = indicator - 1
    order = np.argsort(gidx, kind="stable")
    local = np.empty(len(indicator), dtype=np.int64)
    sizes = np.bincount(gidx, minlength=n_graphs)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    local[order] = np.arange(len(indicator)) - starts[gidx[order]]

    lab_path = path("graph_labels")
    raw_labels = [v[0] for _, v in _parse_ints(lab_path, _read_lines(lab_path), 1)]
    if len(raw_labels) != n_graphs:
        raise DatasetError(f"{lab_path}: {len(raw_labels)} labels for {n_graphs} graphs")
    classes = sorted(set(raw_labels))
    remap = {c: i for i, c in enumerate(classes)}

    adjs = [np.zeros((s, s)) for s in sizes]
    a_path = path("A")
    n_nodes = len(indicator)
    for lineno, (i, j) in _parse_ints(a_path, _read_lines(a_path), 2):
        if not (1 <= i <= n_nodes and 1 <= j <= n_nodes):
            raise DatasetError(f"{a_path}:{lineno}: node id out of range 1..{n_nodes}")
        gi, gj = gidx[i - 1], gidx[j - 1]
        if gi != gj:
            raise DatasetError(f"{a_path}:{lineno}: edge ({i}, {j}) crosses graphs {gi + 1} and {gj + 1}")
        if i == j:
            continue
        a = adjs[gi]
        a[local[i - 1], local[j - 1]] = 1.0
        a[local[j - 1], local[i - 1]] = 1.0

    blocks = []
    nl_path = path("node_labels")
    has_labels = os.path.exists(nl_path)
    if has_labels:
        nl = np.array([v[0] for _, v in _parse_ints(nl_path, _read_lines(nl_path))], dtype=np.int64)
        if len(nl) != n_nodes:
            raise DatasetError(f"{nl_path}: {len(nl)} labels for {n_nodes} nodes")
        values = np.unique(nl)
        onehot = np.zeros((n_nodes, len(values)))
        onehot[np.arange(n_nodes), np.searchsorted(values, nl)] = 1.0
        blocks.append(onehot)
    at_path = path("node_attributes")
    if os.path.exists(at_path) and (use_node_attributes or not has_labels):
        rows = []
        for lineno, ln in enumerate(_read_lines(at_path), 1):
            if not ln:
                continue
            try:
                rows.append([float(p) for p in ln.split(",")])
            except ValueError:
                raise DatasetError(f"{at_path}:{lineno}: cannot parse attributes {ln!r}") from None
        widths = {len(r) for r in rows}
        if len(rows) != n_nodes or len(widths) != 1:
            raise DatasetError(f"{at_path}: expected {n_nodes} rows of equal width")
        blocks.append(np.array(rows))

    graphs = []
    node_feat = np.concatenate(blocks, axis=1) if blocks else None
    for g in range(n_graphs):
        nodes = order[starts[g]:starts[g] + sizes[g]]
        if node_feat is not None:
            feat = node_feat[nodes]
        elif featureless == "degree":
            feat = adjs[g].sum(axis=1, keepdims=True)
        elif featureless == "constant":
            feat = np.ones((sizes[g], 1))
        else:
            raise DatasetError(f"unknown featureless encoding {featureless!r}")
        graphs.append(Graph(adjs[g], np.ascontiguousarray(feat, dtype=np.float64),
                            remap[raw_labels[g]]))
    return Dataset(name, graphs)


def write_tu_dataset(dataset, directory, name=None):
    """Write graphs in TU format; features go to ``node_attributes``."""
    name = dataset.name if name is None else name
    os.makedirs(directory, exist_ok=True)

    def path(suffix):
        return os.path.join(directory, f"{name}_{suffix}.txt")

    offset = 0
    with open(path("A"), "w") as fa, open(path("graph_indicator"), "w") as fi, \
            open(path("node_attributes"), "w") as fx:
        for gid, g in enumerate(dataset.graphs, 1):
            r, c = np.nonzero(g.adj)
            for i, j in zip(r, c):
                fa.write(f"{i + offset + 1}, {j + offset + 1}\n")
            for v in range(g.n):
                fi.write(f"{gid}\n")
                fx.write(", ".join(repr(float(x)) for x in g.feat[v]) + "\n")
            offset += g.n
    with open(path("graph_labels"), "w") as fl:
        for g in dataset.graphs:
            fl.write(f"{g.label}\n")
    return directory


# --------------------------------------------------------------------------
# splits

def _class_groups(labels, rng):
    groups = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        groups.append(idx[rng.permutation(len(idx))])
    return groups


def stratified_kfold(labels, k, seed):
    """``k`` (train, test) index pairs whose test folds partition ``labels``.

    Each class is dealt round-robin across folds (continuing the rotation
    from one class to the next), so per-class fold counts differ from the
    proportional share by less than one.
    """
    labels = np.asarray(labels.labels if isinstance(labels, Dataset) else labels)
    counts = np.bincount(labels)
    counts = counts[counts > 0]
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    if k > counts.min():
        raise ValueError(f"k={k} exceeds the smallest class count {counts.min()}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    pos = 0
    for idx in _class_groups(labels, rng):
        fold_of[idx] = (pos + np.arange(len(idx))) % k
        pos += len(idx)
    all_idx = np.arange(len(labels))
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]


def stratified_split(labels, fractions, seed):
    """Split indices per class into consecutive parts with the given fractions."""
    labels = np.asarray(labels.labels if isinstance(labels, Dataset) else labels)
    fractions = np.asarray(fractions, dtype=np.float64)
    if abs(fractions.sum() - 1.0) > 1e-9 or (fractions < 0).any():
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {fractions.tolist()}")
    rng = np.random.default_rng(seed)
    parts = [[] for _ in fractions]
    for idx in _class_groups(labels, rng):
        cuts = np.round(np.cumsum(fractions) * len(idx)).astype(int)
        start = 0
        for p, stop in enumerate(cuts):
            parts[p].append(idx[start:stop])
            start = stop
    return [np.sort(np.concatenate(p)) for p in parts]


# --------------------------------------------------------------------------
# synthetic datasets

def _erdos_renyi(rng, n, p):
    upper = np.triu(rng.uniform(size=(n, n)) < p, k=1)
    return (upper | upper.T).astype(np.float64)


def _planted(rng, sizes, p_in, p_out):
    block = np.repeat(np.arange(len(sizes)), sizes)
    same = block[:, None] == block[None, :]
    prob = np.where(same, p_in, p_out)
    n = int(sum(sizes))
    upper = np.triu(rng.uniform(size=(n, n)) < prob, k=1)
    return (upper | upper.T).astype(np.float64)


def gen_synthetic(kind, count=200, seed=0, **params):
    """Desk-scale datasets with known structure.

    ``feature-sum``: Erdos-Renyi graphs (n in [15, 25], p = 0.2) with uniform
    4-d features; label 1 iff the graph's channel-0 sum exceeds the median.
    ``planted-clusters``: 24-node graphs with constant features; class 0 has
    2 communities, class 1 has 4 (intra 0.8, inter 0.05).
    """
    if count < 2 or count % 2:
        raise ValueError(f"count must be an even integer >= 2, got {count}")
    rng = np.random.default_rng(seed)
    if kind == "feature-sum":
        lo, hi = params.pop("n_range", (15, 25))
        p = params.pop("p", 0.2)
        dim = params.pop("dim", 4)
        if params:
            raise ValueError(f"unknown feature-sum params {sorted(params)}")
        if not (1 <= lo <= hi) or not (0 <= p <= 1) or dim < 1:
            raise ValueError("invalid feature-sum params")
        adjs, feats = [], []
        for _ in range(count):
            n = int(rng.integers(lo, hi + 1))
            adjs.append(_erdos_renyi(rng, n, p))
            feats.append(rng.uniform(size=(n, dim)))
        sums = np.array([f[:, 0].sum() for f in feats])
        med = np.median(sums)
        labels = (sums > med).astype(int)
        graphs = [Graph(a, f, int(y)) for a, f, y in zip(adjs, feats, labels)]
        return Dataset("feature-sum", graphs)
    if kind == "planted-clusters":
        n = params.pop("n", 24)
        p_in = params.pop("p_in", 0.8)
        p_out = params.pop("p_out", 0.05)
        if params:
            raise ValueError(f"unknown planted-clusters params {sorted(params)}")
        if n % 4 or not (0 <= p_out <= 1) or not (0 <= p_in <= 1):
            raise ValueError("invalid planted-clusters params (n must be divisible by 4)")
        labels = np.array([0, 1] * (count // 2))[rng.permutation(count)]
        graphs = []
        for y in labels:
            parts = 2 if y == 0 else 4
            adj = _planted(rng, [n // parts] * parts, p_in, p_out)
            graphs.append(Graph(adj, np.ones((n, 1)), int(y)))
        return Dataset("planted-clusters", graphs)
    raise ValueError(f"unknown synthetic kind {kind!r}")
