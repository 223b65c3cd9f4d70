import numpy as np
import pytest
from conftest import cycle_adj, path_adj, random_graph, set_param, state_of

from pas.diffcore import ParamStore, Tensor, grad_check
from pas.diffcore import ops as T
from pas.graphdata import Graph
from pas.poolops import (
    GATED,
    HOP_POWERS,
    PoolKind,
    hop_scores,
    node_scores,
    pool,
    pool_discrete,
    pool_masked,
    top_k_select,
)

SCORED = [k for k in PoolKind if k is not PoolKind.NONE]


def single(scores, mask=None, ratio=0.5):
    s = np.asarray(scores, dtype=float)
    m = np.ones_like(s) if mask is None else np.asarray(mask, dtype=float)
    return top_k_select(s, m, ratio, np.array([0, len(s)]))


class TestScores:
    def test_hoppool_path(self):
        g = state_of(Graph(path_adj(3), np.ones((3, 1)), 0))
        np.testing.assert_array_equal(hop_scores(g, 1), [1, 2, 1])
        np.testing.assert_array_equal(hop_scores(g, 2), [2, 4, 2])

    def test_hoppool_leaves_topology_untouched(self):
        # zero-weight edges are dropped from the power series, not from the graph
        g = state_of(Graph(path_adj(4), np.ones((4, 1)), 0))
        g.weight = Tensor(np.where(g.topo.row == 0, 0.0, g.weight.data))
        col_before = g.topo.col.copy()
        weight_before = g.weight.data.copy()
        hop_scores(g, 3)
        np.testing.assert_array_equal(g.topo.col, col_before)
        np.testing.assert_array_equal(g.weight.data, weight_before)

    def test_topkpool_projection(self, params):
        g = state_of(Graph(path_adj(3), np.array([[2.0], [-1.0], [0.5]]), 0))
        set_param(params, "pool.TOPKPOOL.p", [2.0])
        s = node_scores(PoolKind.TOPKPOOL, g, params, "pool")
        np.testing.assert_allclose(s.data, [2.0, -1.0, 0.5])

    def test_gappool_unit_weight(self, params):
        g = state_of(Graph(path_adj(3), np.array([[0.0], [1.0], [3.0]]), 0))
        set_param(params, "pool.GAPPOOL.w", [1.0])
        s = node_scores(PoolKind.GAPPOOL, g, params, "pool")
        np.testing.assert_allclose(s.data, [0.5, 0.5 * (1 + 4), 0.5 * 4])

    def test_none_has_no_scores(self, params):
        with pytest.raises(ValueError):
            node_scores(PoolKind.NONE, state_of(Graph(path_adj(2), np.ones((2, 1)), 0)), params, "p")

    @pytest.mark.parametrize("kind", SCORED)
    def test_shape(self, kind, rng):
        g = state_of([random_graph(rng, 6), random_graph(rng, 4)])
        assert node_scores(kind, g, ParamStore(0), "pool").shape == (10,)


class TestTopK:
    def test_tie_goes_to_lower_index(self):
        np.testing.assert_array_equal(single([0.9, 0.1, 0.5, 0.5]), [0, 2])

    def test_full_ratio(self):
        np.testing.assert_array_equal(single([3, 1, 2], ratio=1.0), [0, 1, 2])

    def test_floor_of_one(self):
        np.testing.assert_array_equal(single([4.0], ratio=0.1), [0])

    def test_masked_nodes_are_not_candidates(self):
        np.testing.assert_array_equal(single([9, 8, 1, 2], mask=[0, 1, 1, 1e-13], ratio=1.0), [1, 2])

    def test_fractional_mask_counts_as_candidate(self):
        np.testing.assert_array_equal(single([1, 5, 2, 0], mask=[1, 0.3, 1, 1]), [1, 2])

    def test_per_graph_selection(self):
        ptr = np.array([0, 3, 5])
        idx = top_k_select(np.array([1.0, 3, 2, 0, -1]), np.ones(5), 0.5, ptr)
        np.testing.assert_array_equal(idx, [1, 2, 3])

    def test_empty_graph_errors(self):
        with pytest.raises(ValueError, match="no candidate"):
            single([1.0, 2.0], mask=[0, 0])

    @pytest.mark.parametrize("ratio", [0.0, 1.5])
    def test_ratio_bounds(self, ratio):
        with pytest.raises(ValueError):
            single([1.0], ratio=ratio)


class TestCoarsening:
    def test_cycle_restriction(self):
        g = state_of(Graph(cycle_adj(4), np.eye(4), 0))
        out = pool_discrete(PoolKind.HOPPOOL_1, g, np.array([0, 2]), None)
        np.testing.assert_array_equal(out.dense_adjacency(), np.zeros((2, 2)))
        np.testing.assert_array_equal(out.h.data, np.eye(4)[[0, 2]])

    def test_zero_score_gates_row_to_zero(self):
        g = state_of(Graph(path_adj(3), np.ones((3, 2)), 0))
        out = pool_discrete(PoolKind.TOPKPOOL, g, np.array([0, 1]), Tensor(np.array([0.0, 1.0, 5.0])))
        np.testing.assert_array_equal(out.h.data[0], [0.0, 0.0])
        np.testing.assert_allclose(out.h.data[1], np.tanh(1.0))

    def test_fig2c_scenario(self, rng):
        adj = np.ones((6, 6)) - np.eye(6)
        g = state_of(Graph(adj, rng.normal(size=(6, 3)), 0))
        idx = np.array([0, 1, 4, 5])
        out = pool_masked(PoolKind.SAGPOOL, g, idx, Tensor(rng.normal(size=6)))
        a = out.dense_adjacency()
        assert (out.h.data[[2, 3]] == 0.0).all()
        assert (a[[2, 3], :] == 0.0).all() and (a[:, [2, 3]] == 0.0).all()
        np.testing.assert_array_equal(out.mask.data, [1, 1, 0, 0, 1, 1])
        assert (a[np.ix_(idx, idx)] == adj[np.ix_(idx, idx)]).all()

    def test_none_is_identity(self, rng):
        g = state_of(random_graph(rng, 5))
        for masked in (True, False):
            out, idx, scores = pool(PoolKind.NONE, g, ParamStore(0), "pool", 0.5, masked)
            assert out is g and scores is None
            np.testing.assert_array_equal(idx, np.arange(5))

    @pytest.mark.parametrize("kind", SCORED)
    def test_masked_restricted_equals_discrete(self, kind, rng):
        g = state_of([random_graph(rng, 8), random_graph(rng, 5)],
                     mask=[1, 1, 0.5, 0, 1, 1, 1, 1, 1, 0, 1, 1, 1])
        params = ParamStore(5)
        scores = node_scores(kind, g, params, "pool")
        idx = top_k_select(scores, g.mask, 0.5, g.topo.ptr)
        disc = pool_discrete(kind, g, idx, scores)
        mask_out = pool_masked(kind, g, idx, scores)
        assert disc.h.shape[0] == len(idx)
        np.testing.assert_array_equal(mask_out.h.data[idx], disc.h.data)
        np.testing.assert_array_equal(mask_out.mask.data[idx], disc.mask.data)
        np.testing.assert_array_equal(mask_out.dense_adjacency()[np.ix_(idx, idx)],
                                      disc.dense_adjacency())
        dropped = np.setdiff1d(np.arange(13), idx)
        assert (mask_out.h.data[dropped] == 0.0).all()
        assert (mask_out.mask.data[dropped] == 0.0).all()
        a = mask_out.dense_adjacency()
        assert (a[dropped] == 0.0).all() and (a[:, dropped] == 0.0).all()

    @pytest.mark.parametrize("kind", SCORED)
    def test_permutation_consistency(self, kind, rng):
        graph = random_graph(rng, 10)
        perm = rng.permutation(10)
        permuted = Graph(graph.adj[np.ix_(perm, perm)], graph.feat[perm], 0)
        a, ia, sa = pool(kind, state_of(graph), ParamStore(7), "pool", 0.5, True, "elu")
        b, ib, sb = pool(kind, state_of(permuted), ParamStore(7), "pool", 0.5, True, "elu")
        if len(np.unique(np.round(sa.data, 12))) < 10:
            pytest.skip("tied scores make the selection order-dependent")
        # node i of the permuted graph is node perm[i] of the original
        np.testing.assert_array_equal(np.sort(perm[ib]), ia)
        np.testing.assert_allclose(b.h.data, a.h.data[perm], atol=1e-12)

    @pytest.mark.parametrize("kind", sorted(GATED))
    def test_score_parameters_get_gradient_through_gate(self, kind, rng):
        g = state_of([random_graph(rng, 7), random_graph(rng, 6)])
        g.h = g.h * 0.3  # keep tanh out of saturation
        params = ParamStore(2)
        r = rng.normal(size=(13, 3))

        def loss(p):
            out, _, _ = pool(kind, g, p, "pool", 0.5, True, "elu")
            return T.tsum(out.h * r)
        loss(params).backward()
        assert any(np.abs(p.grad).max() > 0 for p in params.values())
        errs = grad_check(loss, params)
        assert max(errs.values()) <= 1e-4

    def test_hoppool_is_not_gated(self):
        assert not (set(HOP_POWERS) & GATED)
        assert PoolKind.NONE not in GATED and len(GATED) == 6
