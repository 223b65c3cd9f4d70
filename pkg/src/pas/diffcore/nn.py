"""Composite differentiable building blocks and parameter storage."""
from __future__ import annotations

import zlib

import numpy as np

from . import tensor as T
from .tensor import Tensor

ACTIVATIONS = {
    "relu": T.relu,
    "elu": T.elu,
    "linear": T.identity,
    "tanh": T.tanh,
}


def activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


class ParamStore(dict):
    """Trainable tensors addressed by ``"site.KIND.name"`` keys.

    Initial values are a pure function of ``(seed, key)``, so a store holding a
    subset of keys (a derived architecture) starts from exactly the same
    values as the corresponding entries of a full supernet store.
    """

    def __init__(self, seed=0):
        super().__init__()
        self.seed = int(seed)

    def _rng(self, key):
        return np.random.default_rng([self.seed, zlib.crc32(key.encode())])

    def glorot(self, key, fan_in, fan_out, shape=None):
        shape = (fan_in, fan_out) if shape is None else shape
        if key not in self:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self[key] = Tensor(self._rng(key).uniform(-bound, bound, size=shape),
                               requires_grad=True, name=key)
        return self[key]

    def zeros(self, key, shape):
        if key not in self:
            self[key] = Tensor(np.zeros(shape), requires_grad=True, name=key)
        return self[key]

    def zero_grad(self):
        for p in self.values():
            p.grad = None

    def snapshot(self):
        return {k: p.data.copy() for k, p in self.items()}

    def restore(self, snap):
        for k, v in snap.items():
            self[k].data = v.copy()

    def num_scalars(self):
        return int(sum(p.data.size for p in self.values()))


def linear(x, params, prefix, fan_in, fan_out, bias=True):
    """``x @ W (+ b)`` with lazily created Glorot weights under ``prefix``."""
    w = params.glorot(f"{prefix}.W", fan_in, fan_out)
    out = T.matmul(x, w)
    if bias:
        out = out + params.zeros(f"{prefix}.b", (fan_out,))
    return out


def lstm_cell(x, h, c, params, prefix, in_dim, hidden):
    """One LSTM step with gate order (input, forget, cell, output)."""
    w_ih = params.glorot(f"{prefix}.W_ih", in_dim, 4 * hidden)
    w_hh = params.glorot(f"{prefix}.W_hh", hidden, 4 * hidden)
    b = params.zeros(f"{prefix}.b", (4 * hidden,))
    gates = T.matmul(x, w_ih) + T.matmul(h, w_hh) + b
    i = T.sigmoid(gates[:, :hidden])
    f = T.sigmoid(gates[:, hidden:2 * hidden])
    g = T.tanh(gates[:, 2 * hidden:3 * hidden])
    o = T.sigmoid(gates[:, 3 * hidden:])
    c_new = f * c + i * g
    h_new = o * T.tanh(c_new)
    return h_new, c_new


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels, dtype=np.int64)
    n, ncls = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= ncls):
        raise ValueError(f"label out of range [0, {ncls})")
    logp = T.log_softmax(logits, axis=1)
    picked = T.getitem(logp, (np.arange(n), labels))
    return -T.tmean(picked)
