"""Finite-difference gradient checks over every differentiable operation.

Each check builds a scalar loss ``sum(R * op(...))`` with a fixed random
projection ``R`` and compares reverse-mode gradients with central
differences, for the operation's parameters and its input features.
Activations are ELU: it is continuously differentiable, so central
differences are meaningful at every point (ReLU has a kink exactly where
zero-initialized biases put dead units).
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .aggops import AggKind, aggregate
from .diffcore import ParamStore, Rng, Tensor, grad_check, gumbel_noise
from .diffcore import ops as T
from .graphdata import Graph, make_batch
from .poolops import HOP_POWERS, PoolKind, node_scores
from .readmerge import MergeKind, ReadoutKind, classify, merge, readout
from .structure import GraphState
from .supernet import relax_weights

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    error: float
    passed: bool


def random_graphs(rng, count, n_min=3, n_max=30, feat_dim=3, p=0.3):
    graphs = []
    for _ in range(count):
        n = int(rng.integers(n_min, n_max + 1))
        upper = np.triu(rng.random((n, n)) < p, 1)
        adj = (upper | upper.T).astype(np.float64)
        graphs.append(Graph(adj, rng.normal(size=(n, feat_dim)), int(rng.integers(2))))
    return graphs


def _state(batch, x):
    g = GraphState.from_batch(batch)
    g.h = x
    return g


ACT = "elu"


def _checks(batch, hidden, rng):
    """Yield ``(name, loss_fn, params)`` for every operation in the search space."""
    n = batch.num_nodes
    d_in = batch.feat.shape[1]

    def fresh(seed):
        params = ParamStore(seed)
        params["x"] = Tensor(batch.feat.copy(), requires_grad=True)
        return params

    def projected(out_shape):
        r = rng.normal(size=out_shape)
        return lambda out: T.tsum(out * r)

    for kind in AggKind:
        params = fresh(int(kind))
        proj = projected((n, hidden))
        yield (f"agg.{kind.name}",
               lambda p, k=kind, f=proj: f(aggregate(k, _state(batch, p["x"]), p, "agg", hidden, ACT)),
               params)
    for kind in PoolKind:
        if kind is PoolKind.NONE or kind in HOP_POWERS:
            continue
        params = fresh(100 + int(kind))
        proj = projected((n,))
        yield (f"pool.{kind.name}",
               lambda p, k=kind, f=proj: f(node_scores(k, _state(batch, p["x"]), p, "pool", ACT)),
               params)
    b = batch.num_graphs
    for kind in ReadoutKind:
        if kind is ReadoutKind.ZERO:
            continue
        params = fresh(200 + int(kind))
        proj = projected((b, d_in))
        yield (f"read.{kind.name}",
               lambda p, k=kind, f=proj: f(readout(k, _state(batch, p["x"]), p, "read", sort_k=4)),
               params)
    for kind in MergeKind:
        params = ParamStore(300 + int(kind))
        for i in range(3):
            params[f"z{i}"] = Tensor(rng.normal(size=(b, hidden)), requires_grad=True)
        proj = projected((b, hidden))
        yield (f"merge.{kind.name}",
               lambda p, k=kind, f=proj: f(merge(k, [p["z0"], p["z1"], p["z2"]], p, "merge")),
               params)
    params = ParamStore(400)
    params["z"] = Tensor(rng.normal(size=(b, hidden)), requires_grad=True)
    proj = projected((b, 2))
    yield "classifier", lambda p, f=proj: f(classify(p["z"], p, 2)), params
    # with noise at tau=0.2 the softmax saturates and the smallest weights'
    # gradients drop below finite-difference resolution, so noise is
    # checked at tau=1 and the search temperature without noise
    noise = gumbel_noise(Rng(int(rng.integers(1 << 31))), 6)
    for name, tau, eps in (("relax_weights", 0.2, None), ("relax_weights.gumbel", 1.0, noise)):
        params = {"alpha": Tensor(rng.normal(size=6) * 0.1, requires_grad=True)}
        proj = projected((6,))
        yield name, lambda p, f=proj, t=tau, e=eps: f(relax_weights(p["alpha"], t, e)), params


def run_gradient_suite(num_graphs=20, seed=0, hidden=4, step=1e-5, per_batch=4, corrupt=None):
    """Run every check on ``num_graphs`` random graphs, ``per_batch`` at a time.

    Returns ``(results, wall_time)`` with one result per operation holding the
    worst error over all batches. Small batches keep the loss magnitude, and
    with it the finite-difference roundoff, small. ``corrupt`` names a check
    whose analytic gradient is deliberately perturbed, so callers can confirm
    that a wrong gradient is caught.
    """
    rng = np.random.default_rng(seed)
    graphs = random_graphs(rng, num_graphs)
    worst = {}
    t0 = time.perf_counter()
    for start in range(0, num_graphs, per_batch):
        batch = make_batch(graphs[start:start + per_batch])
        for name, fn, params in _checks(batch, hidden, rng):
            loss_fn = fn
            if corrupt is not None and name == corrupt:
                loss_fn = _corrupted(fn, params)
            errs = grad_check(loss_fn, params, step=step)
            worst[name] = max(worst.get(name, 0.0), *errs.values())
    if corrupt is not None and corrupt not in worst:
        raise ValueError(f"no gradient check named {corrupt!r}; choose from {sorted(worst)}")
    results = [CheckResult(k, v, v <= TOLERANCE) for k, v in worst.items()]
    return results, time.perf_counter() - t0


def _corrupted(fn, params):
    """Same value as ``fn`` but an extra backward contribution on the first parameter."""
    key = next(iter(params))

    def wrapped(p):
        out = fn(p)
        leak = T.tsum(p[key])
        # forward value unchanged, gradient shifted by one
        return out + leak - Tensor(leak.data)
    return wrapped
