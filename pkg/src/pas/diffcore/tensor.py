"""Reverse-mode autodiff over float64 numpy arrays.

The tape is rebuilt on every forward pass: each op records its parents and a
closure mapping the output gradient to parent gradients. ``Tensor.backward``
walks the recorded graph in reverse topological order and accumulates into
the ``grad`` of leaf tensors created with ``requires_grad=True``.
"""
from __future__ import annotations

import contextlib
import threading

import numpy as np
import scipy.sparse as sp

from .. import _kernels

# per thread, so parallel folds can evaluate and train at the same time
_state = threading.local()


def grad_enabled():
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a tape (affects the calling thread only)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        topo = _toposort(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            pgrads = node._backward(g)
            for parent, pg in zip(node._parents, pgrads):
                if pg is None or not _tracks(parent):
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _tracks(t):
    return t.requires_grad or t._backward is not None


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and _tracks(p):
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if grad_enabled() and any(_tracks(p) for p in parents):
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# elementwise arithmetic ---------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return (_unbroadcast(g / bd, ad.shape),
                _unbroadcast(-g * out / bd, bd.shape))

    return _make(out, (a, b), backward)


def power(a, p):
    a = as_tensor(a)
    ad = a.data
    p = float(p)
    return _make(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1.0),))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    a = as_tensor(a)
    ad = a.data
    # stable in both tails
    e = np.exp(-np.abs(ad))
    out = np.where(ad >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    a = as_tensor(a)
    pos = a.data > 0
    # NaN stays NaN so divergence is visible downstream
    return _make(np.where(a.data <= 0, 0.0, a.data), (a,), lambda g: (g * pos,))


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    pos = a.data > 0
    return _make(np.where(pos, a.data, slope * a.data), (a,),
                 lambda g: (np.where(pos, g, slope * g),))


def elu(a, alpha=1.0):
    a = as_tensor(a)
    pos = a.data > 0
    neg = alpha * np.expm1(np.minimum(a.data, 0.0))
    out = np.where(pos, a.data, neg)
    return _make(out, (a,), lambda g: (np.where(pos, g, g * (neg + alpha)),))


def identity(a):
    return as_tensor(a)


def clamp_min(a, lo):
    a = as_tensor(a)
    keep = a.data >= lo
    return _make(np.where(a.data < lo, lo, a.data), (a,), lambda g: (g * keep,))


# reductions and shape ops -------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(out, (a,), backward)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def max_axis(a, axis):
    """Max along ``axis``; the gradient goes to the first maximal entry."""
    a = as_tensor(a)
    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)
    shape = a.shape

    def backward(g):
        ga = np.zeros(shape)
        np.put_along_axis(ga, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return (ga,)

    return _make(out, (a,), backward)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a):
    a = as_tensor(a)
    return _make(a.data.T, (a,), lambda g: (g.T,))


def getitem(a, key):
    a = as_tensor(a)
    shape = a.shape

    def backward(g):
        ga = np.zeros(shape)
        np.add.at(ga, key, g)
        return (ga,)

    return _make(a.data[key], (a,), backward)


def concat(tensors, axis=0):
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts),
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors, axis=0):
    ts = [as_tensor(t) for t in tensors]
    return _make(np.stack([t.data for t in ts], axis=axis), tuple(ts),
                 lambda g: tuple(np.moveaxis(g, axis, 0)))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def backward(g):
        if bd.ndim == 1:
            ga = np.outer(g, bd) if ad.ndim == 2 else g * bd
            gb = ad.T @ g if ad.ndim == 2 else g * ad
        elif ad.ndim == 1:
            ga = bd @ g
            gb = np.outer(ad, g)
        else:
            ga = g @ bd.T
            gb = ad.T @ g
        return ga, gb

    return _make(ad @ bd, (a, b), backward)


def softmax(a, axis=-1):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    return _make(out, (a,),
                 lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)
    return _make(out, (a,), lambda g: (g - sm * g.sum(axis=axis, keepdims=True),))


# gather / scatter / segment ops ------------------------------------------

def gather_rows(a, idx, fill_missing=False):
    """Rows ``a[idx]``; with ``fill_missing`` negative indices give zero rows."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    shape = a.shape
    if fill_missing:
        valid = idx >= 0
        safe = np.where(valid, idx, 0)
        vmask = valid.reshape(valid.shape + (1,) * (a.ndim - 1))
        out = np.where(vmask, a.data[safe], 0.0)
    else:
        safe, vmask = idx, None
        out = a.data[idx]

    def backward(g):
        ga = np.zeros(shape)
        gg = g if vmask is None else np.where(vmask, g, 0.0)
        np.add.at(ga, safe, gg)
        return (ga,)

    return _make(out, (a,), backward)


def scatter_add(a, idx, n):
    """Sum rows of ``a`` into ``n`` output rows at positions ``idx``."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out = np.zeros((n,) + a.shape[1:])
    np.add.at(out, idx, a.data)
    return _make(out, (a,), lambda g: (g[idx],))


def segment_sum(a, ptr):
    """Sum contiguous row segments ``ptr[i]:ptr[i+1]`` of a 1-d or 2-d tensor."""
    a = as_tensor(a)
    flat = a.ndim == 1
    x = a.data[:, None] if flat else a.data
    out = _kernels.segment_sum(x, ptr)
    counts = np.diff(ptr)

    def backward(g):
        g2 = g[:, None] if flat else g
        ga = np.repeat(g2, counts, axis=0)
        return (ga[:, 0] if flat else ga,)

    return _make(out[:, 0] if flat else out, (a,), backward)


def segment_max(a, ptr, active):
    """Per-segment, per-column max over active rows (0 for empty segments)."""
    a = as_tensor(a)
    vals, arg = _kernels.segment_max(a.data, ptr, active)
    shape = a.shape

    def backward(g):
        ga = np.zeros(shape)
        seg, col = np.nonzero(arg >= 0)
        np.add.at(ga, (arg[seg, col], col), g[seg, col])
        return (ga,)

    return _make(vals, (a,), backward)


def segment_softmax(a, ptr, active):
    """Softmax of a 1-d tensor within segments over active entries; others get 0."""
    a = as_tensor(a)
    out = _kernels.segment_softmax(a.data, ptr, active)
    counts = np.diff(ptr)

    def backward(g):
        dot = _kernels.segment_sum((g * out)[:, None], ptr)[:, 0]
        return (out * (g - np.repeat(dot, counts)),)

    return _make(out, (a,), backward)


def spmm(weights, indptr, indices, x, n_rows=None):
    """Sparse (CSR) weighted adjacency times dense features.

    ``weights`` holds one value per stored entry; row ``r`` owns entries
    ``indptr[r]:indptr[r+1]`` whose columns are ``indices``. Gradients flow to
    both the entry weights and ``x``.
    """
    weights, x = as_tensor(weights), as_tensor(x)
    n_rows = len(indptr) - 1 if n_rows is None else n_rows
    n_cols = x.shape[0]
    mat = sp.csr_matrix((weights.data, indices, indptr), shape=(n_rows, n_cols))
    xd = x.data
    rows = np.repeat(np.arange(n_rows), np.diff(indptr))

    def backward(g):
        gw = None
        if _tracks(weights):
            gw = (g[rows] * xd[indices]).sum(axis=1) if xd.ndim == 2 else g[rows] * xd[indices]
        gx = mat.T @ g
        return gw, np.asarray(gx)

    return _make(np.asarray(mat @ xd), (weights, x), backward)
