"""Pure-numpy versions of the segment kernels.

Segments are contiguous row ranges ``ptr[i]:ptr[i+1]``. Every function here
has a compiled twin in ``_segment.pyx`` with identical semantics; the test
suite checks the two against each other.
"""
import numpy as np


def segment_sum(x, ptr):
    """Sum rows of ``x`` (n, d) within each segment, accumulating in row order."""
    x = np.asarray(x, dtype=np.float64)
    ptr = np.asarray(ptr, dtype=np.int64)
    counts = np.diff(ptr)
    out = np.zeros((len(counts), x.shape[1]), dtype=np.float64)
    # step through row offsets so every segment adds its rows in order,
    # which keeps results bit-identical to the compiled kernel
    for off in range(int(counts.max(initial=0))):
        seg = np.flatnonzero(counts > off)
        out[seg] += x[ptr[seg] + off]
    return out


def segment_max(x, ptr, active):
    """Per-segment, per-column max over active rows.

    Returns ``(values, argmax)``; ties resolve to the lowest row, segments with
    no active row give value 0 and argmax -1.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    nseg = len(ptr) - 1
    vals = np.zeros((nseg, d), dtype=np.float64)
    arg = np.full((nseg, d), -1, dtype=np.int64)
    active = np.asarray(active, dtype=bool)
    if n == 0 or not active.any():
        return vals, arg
    seg = np.repeat(np.arange(nseg), np.diff(ptr))
    rows = np.flatnonzero(active)
    xs = x[rows]
    sg = seg[rows]
    for j in range(d):
        # sort by (segment, -value, row) and keep the first row of each segment
        order = np.lexsort((rows, -xs[:, j], sg))
        first = np.ones(len(order), dtype=bool)
        first[1:] = sg[order][1:] != sg[order][:-1]
        pick = order[first]
        vals[sg[pick], j] = xs[pick, j]
        arg[sg[pick], j] = rows[pick]
    return vals, arg


def segment_softmax(x, ptr, active):
    """Softmax of a 1-d score vector within segments, restricted to active entries."""
    x = np.asarray(x, dtype=np.float64)
    active = np.asarray(active, dtype=bool)
    out = np.zeros_like(x)
    nseg = len(ptr) - 1
    if not active.any():
        return out
    seg = np.repeat(np.arange(nseg), np.diff(ptr))
    xa = np.where(active, x, -np.inf)
    mx = np.full(nseg, -np.inf)
    np.maximum.at(mx, seg, xa)
    shifted = np.where(active, x - mx[seg], -np.inf)
    e = np.exp(shifted)
    denom = segment_sum(e[:, None], ptr)[:, 0]
    out[active] = e[active] / denom[seg[active]]
    return out


def _k_of(count, ratio):
    k = np.ceil(ratio * count - 1e-9).astype(np.int64)
    return np.maximum(k, 1)


def topk_select(scores, candidate, ptr, ratio):
    """Boolean selection of the top ``ceil(ratio * candidates)`` nodes per segment.

    Ties go to the lower index. Raises ValueError naming the first segment that
    has no candidate.
    """
    scores = np.asarray(scores, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=bool)
    nseg = len(ptr) - 1
    n = len(scores)
    seg = np.repeat(np.arange(nseg), np.diff(ptr))
    ncand = np.bincount(seg[candidate], minlength=nseg)
    empty = np.flatnonzero(ncand == 0)
    if len(empty):
        raise ValueError(f"graph {empty[0]} has no candidate nodes to pool")
    k = _k_of(ncand, ratio)
    idx = np.arange(n)
    order = np.lexsort((idx, -scores, ~candidate, seg))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n) - ptr[seg[order]]
    return candidate & (rank < k[seg])


def sort_index(key, active, ptr, k):
    """Row indices of the ``k`` active rows with the largest key per segment.

    Returns an (nseg, k) int64 array padded with -1; ties go to the lower row.
    """
    key = np.asarray(key, dtype=np.float64)
    active = np.asarray(active, dtype=bool)
    nseg = len(ptr) - 1
    n = len(key)
    out = np.full((nseg, k), -1, dtype=np.int64)
    if n == 0:
        return out
    seg = np.repeat(np.arange(nseg), np.diff(ptr))
    idx = np.arange(n)
    order = np.lexsort((idx, -key, ~active, seg))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n) - ptr[seg[order]]
    keep = active & (rank < k)
    out[seg[keep], rank[keep]] = idx[keep]
    return out
