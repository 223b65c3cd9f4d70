import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pas.graphdata import (
    Dataset,
    DatasetError,
    Graph,
    gen_synthetic,
    load_tu_dataset,
    make_batch,
    stratified_kfold,
    stratified_split,
    write_tu_dataset,
)


def write_files(tmp_path, name, files):
    for suffix, text in files.items():
        (tmp_path / f"{name}_{suffix}.txt").write_text(text)
    return tmp_path


@pytest.fixture
def tiny_tu(tmp_path):
    return write_files(tmp_path, "TINY", {
        "A": "1, 2\n2, 1\n3, 4\n4, 3\n",
        "graph_indicator": "1\n1\n2\n2\n",
        "graph_labels": "1\n2\n",
    })


class TestLoadTU:
    def test_two_graph_fixture(self, tiny_tu):
        ds = load_tu_dataset(tiny_tu, "TINY")
        assert len(ds) == 2 and ds.num_classes == 2
        for g in ds.graphs:
            assert g.n == 2
            np.testing.assert_array_equal(g.adj, [[0, 1], [1, 0]])
            np.testing.assert_array_equal(g.feat, [[1.0], [1.0]])
        np.testing.assert_array_equal(ds.labels, [0, 1])

    def test_missing_adjacency_file_is_named(self, tiny_tu):
        (tiny_tu / "TINY_A.txt").unlink()
        with pytest.raises(DatasetError, match="TINY_A.txt"):
            load_tu_dataset(tiny_tu, "TINY")

    def test_edge_crossing_graphs_reports_line(self, tiny_tu):
        (tiny_tu / "TINY_A.txt").write_text("1, 2\n2, 3\n")
        with pytest.raises(DatasetError, match=r"TINY_A.txt:2: .*crosses graphs"):
            load_tu_dataset(tiny_tu, "TINY")

    def test_graph_id_gap(self, tiny_tu):
        (tiny_tu / "TINY_graph_indicator.txt").write_text("1\n1\n3\n3\n")
        with pytest.raises(DatasetError, match="without gaps"):
            load_tu_dataset(tiny_tu, "TINY")

    def test_unparseable_line(self, tiny_tu):
        (tiny_tu / "TINY_graph_labels.txt").write_text("1\nx\n")
        with pytest.raises(DatasetError, match="graph_labels.txt:2"):
            load_tu_dataset(tiny_tu, "TINY")

    def test_one_directional_edges_are_symmetrized_and_loops_dropped(self, tmp_path):
        write_files(tmp_path, "D", {"A": "1, 2\n2, 3\n3, 3\n", "graph_indicator": "1\n1\n1\n",
                                    "graph_labels": "0\n"})
        g = load_tu_dataset(tmp_path, "D").graphs[0]
        np.testing.assert_array_equal(g.adj, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])

    def test_node_labels_one_hot_ascending(self, tiny_tu):
        (tiny_tu / "TINY_node_labels.txt").write_text("7\n2\n2\n5\n")
        ds = load_tu_dataset(tiny_tu, "TINY")
        assert ds.num_features == 3
        np.testing.assert_array_equal(ds.graphs[0].feat, [[0, 0, 1], [1, 0, 0]])
        np.testing.assert_array_equal(ds.graphs[1].feat, [[1, 0, 0], [0, 1, 0]])

    def test_attributes_appended_when_requested(self, tiny_tu):
        (tiny_tu / "TINY_node_labels.txt").write_text("0\n1\n0\n1\n")
        (tiny_tu / "TINY_node_attributes.txt").write_text("0.5\n1.5\n2.5\n3.5\n")
        assert load_tu_dataset(tiny_tu, "TINY").num_features == 2
        ds = load_tu_dataset(tiny_tu, "TINY", use_node_attributes=True)
        np.testing.assert_array_equal(ds.graphs[1].feat, [[1, 0, 2.5], [0, 1, 3.5]])

    def test_degree_featureless_option(self, tiny_tu):
        ds = load_tu_dataset(tiny_tu, "TINY", featureless="degree")
        np.testing.assert_array_equal(ds.graphs[0].feat, [[1.0], [1.0]])

    def test_round_trip(self, tmp_path):
        ds = gen_synthetic("feature-sum", 20, seed=4)
        write_tu_dataset(ds, tmp_path, "RT")
        back = load_tu_dataset(tmp_path, "RT")
        assert len(back) == len(ds)
        for a, b in zip(ds.graphs, back.graphs):
            assert a.same_as(b)


class TestDataset:
    def test_rejects_label_gap(self):
        g = Graph(np.zeros((1, 1)), np.ones((1, 1)), 0)
        with pytest.raises(DatasetError):
            Dataset("x", [g, Graph(np.zeros((1, 1)), np.ones((1, 1)), 2)])

    def test_rejects_mixed_feature_dims(self):
        with pytest.raises(DatasetError):
            Dataset("x", [Graph(np.zeros((1, 1)), np.ones((1, 1)), 0),
                          Graph(np.zeros((1, 1)), np.ones((1, 2)), 1)])


class TestBatch:
    def test_two_and_three_nodes(self):
        g1 = Graph(np.array([[0.0, 1], [1, 0]]), np.ones((2, 2)), 0)
        g2 = Graph(np.array([[0.0, 1, 0], [1, 0, 1], [0, 1, 0]]), np.zeros((3, 2)), 1)
        b = make_batch([g1, g2])
        dense = b.dense_adjacency()
        assert dense.shape == (5, 5)
        np.testing.assert_array_equal(b.membership, [0, 0, 1, 1, 1])
        np.testing.assert_array_equal(dense[:2, 2:], 0)
        np.testing.assert_array_equal(b.mask, np.ones(5))
        np.testing.assert_array_equal(b.labels, [0, 1])

    def test_single_graph(self):
        g = gen_synthetic("planted-clusters", 2, seed=1).graphs[0]
        np.testing.assert_array_equal(make_batch([g]).dense_adjacency(), g.adj)

    def test_errors(self):
        with pytest.raises(ValueError):
            make_batch([])
        with pytest.raises(ValueError):
            make_batch([Graph(np.zeros((1, 1)), np.ones((1, 1)), 0),
                        Graph(np.zeros((1, 1)), np.ones((1, 3)), 0)])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 6))
    def test_extraction_inverts_batching(self, seed, count):
        graphs = gen_synthetic("feature-sum", 2 * count, seed=seed).graphs[:count]
        b = make_batch(graphs)
        for i, g in enumerate(graphs):
            assert b.graph(i).same_as(g)


class TestFolds:
    def test_exact_proportions(self):
        labels = np.array([0] * 6 + [1] * 4)
        for train, test in stratified_kfold(labels, 2, seed=0):
            assert np.sum(labels[test] == 0) == 3 and np.sum(labels[test] == 1) == 2
            assert len(train) + len(test) == 10

    def test_partition_and_determinism(self):
        labels = np.random.default_rng(0).integers(0, 3, size=97)
        folds = stratified_kfold(labels, 5, seed=7)
        tests = np.concatenate([t for _, t in folds])
        np.testing.assert_array_equal(np.sort(tests), np.arange(97))
        again = stratified_kfold(labels, 5, seed=7)
        for (a, b), (c, d) in zip(folds, again):
            np.testing.assert_array_equal(a, c)
            np.testing.assert_array_equal(b, d)

    def test_k_bounds(self):
        with pytest.raises(ValueError, match="smallest class"):
            stratified_kfold(np.array([0, 0, 0, 1, 1]), 3, seed=0)
        with pytest.raises(ValueError):
            stratified_kfold(np.array([0, 1]), 1, seed=0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=8, max_size=80), st.integers(2, 10), st.integers(0, 99))
    def test_per_class_deviation_at_most_one(self, labels, k, seed):
        labels = np.array(labels)
        counts = np.bincount(labels)
        if k > counts[counts > 0].min():
            return
        for _, test in stratified_kfold(labels, k, seed):
            for c in np.flatnonzero(counts):
                assert abs(np.sum(labels[test] == c) - counts[c] / k) < 1.0

    def test_split_fractions(self):
        labels = np.array([0] * 100 + [1] * 100)
        tr, va, te = stratified_split(labels, (0.8, 0.1, 0.1), seed=0)
        assert (len(tr), len(va), len(te)) == (160, 20, 20)
        assert np.sum(labels[te] == 0) == 10
        assert len(np.intersect1d(tr, te)) == 0 and len(np.intersect1d(tr, va)) == 0


class TestSynthetic:
    def test_feature_sum_balanced(self):
        ds = gen_synthetic("feature-sum", 200, seed=0)
        assert np.bincount(ds.labels).tolist() == [100, 100]
        assert ds.num_features == 4
        assert all(15 <= g.n <= 25 for g in ds.graphs)
        sums = np.array([g.feat[:, 0].sum() for g in ds.graphs])
        assert sums[ds.labels == 1].min() > sums[ds.labels == 0].max()

    def test_planted_clusters(self):
        ds = gen_synthetic("planted-clusters", 10, seed=0)
        assert all(g.n == 24 for g in ds.graphs)
        assert np.bincount(ds.labels).tolist() == [5, 5]
        np.testing.assert_array_equal(ds.graphs[0].feat, np.ones((24, 1)))

    def test_seed_determinism(self):
        a, b = gen_synthetic("feature-sum", 10, seed=3), gen_synthetic("feature-sum", 10, seed=3)
        assert all(x.same_as(y) for x, y in zip(a.graphs, b.graphs))

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            gen_synthetic("feature-sum", 7)
        with pytest.raises(ValueError):
            gen_synthetic("nope", 10)
        with pytest.raises(ValueError):
            gen_synthetic("feature-sum", 10, p=2.0)
