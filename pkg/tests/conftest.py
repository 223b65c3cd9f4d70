import numpy as np
import pytest

from pas.diffcore import ParamStore, Tensor
from pas.graphdata import Graph, make_batch
from pas.structure import GraphState


def path_adj(n):
    a = np.zeros((n, n))
    i = np.arange(n - 1)
    a[i, i + 1] = a[i + 1, i] = 1.0
    return a


def cycle_adj(n):
    a = path_adj(n)
    a[0, n - 1] = a[n - 1, 0] = 1.0
    return a


def random_graph(rng, n, d=3, p=0.4, label=0):
    upper = np.triu(rng.random((n, n)) < p, 1)
    return Graph((upper | upper.T).astype(float), rng.normal(size=(n, d)), label)


def state_of(graphs, mask=None):
    """GraphState for one graph or a list of graphs, optionally with a node mask."""
    if isinstance(graphs, Graph):
        graphs = [graphs]
    g = GraphState.from_batch(make_batch(graphs))
    if mask is not None:
        m = np.asarray(mask, dtype=float)
        g.mask = Tensor(m)
        g.h = g.h * m[:, None]
        keep = m[g.topo.row] * m[g.topo.col] > 0
        g.weight = Tensor(np.where(keep, g.weight.data, 0.0))
    return g


def set_param(params, key, value):
    params[key] = Tensor(np.asarray(value, dtype=float), requires_grad=True, name=key)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params():
    return ParamStore(0)
