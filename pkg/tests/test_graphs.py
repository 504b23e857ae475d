import numpy as np
import pytest

from swagnn.errors import ConfigError, ContractError, FormatError, LoadError
from swagnn.graphs import (
    Dataset,
    DiffusionConfig,
    Graph,
    degree_features,
    diffuse,
    load_tu_dataset,
    stratified_folds,
    transition_matrix,
    write_tu_dataset,
)


def triangle():
    a = np.zeros((3, 3))
    for u, v in [(0, 1), (1, 2), (0, 2)]:
        a[u, v] = a[v, u] = 1.0
    return Graph(3, a, degree_features(Graph(3, a, np.zeros((3, 1)))))


def edge_graph():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    return Graph(2, a, degree_features(Graph(2, a, np.zeros((2, 1)))))


def test_graph_validation():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ContractError):
        Graph(2, a, np.zeros((2, 1))).validate()
    with pytest.raises(ContractError):
        Graph(2, np.eye(2), np.zeros((2, 1))).validate()
    with pytest.raises(ContractError):
        Graph(3, np.zeros((2, 2)), np.zeros((2, 1))).validate()


def test_transition_matrix_edge():
    t = transition_matrix(edge_graph())
    np.testing.assert_allclose(t, np.array([[0.0, 1.0], [1.0, 0.0]]), atol=1e-15)


def test_transition_matrix_isolated_node_zero_row():
    a = np.zeros((3, 3))
    a[0, 1] = a[1, 0] = 1.0
    g = Graph(3, a, np.zeros((3, 1)))
    t = transition_matrix(g)
    np.testing.assert_array_equal(t[2], np.zeros(3))
    np.testing.assert_array_equal(t[:, 2], np.zeros(3))
    assert np.all(np.isfinite(t))


def test_diffusion_coefficients_mass():
    for alpha, depth in [(0.15, 3), (0.5, 0), (0.05, 7)]:
        cfg = DiffusionConfig(alpha=alpha, depth=depth)
        total = cfg.coefficients().sum()
        expected = 1.0 - (1.0 - alpha) ** (depth + 1)
        assert abs(total - expected) < 1e-12


def test_diffuse_two_node_values():
    # alpha=0.15, depth=2 on a single edge: T is the swap matrix, so even
    # powers hit the diagonal and odd powers the off-diagonal.
    b = diffuse(edge_graph(), DiffusionConfig(alpha=0.15, depth=2))
    expected_diag = 0.15 + 0.15 * 0.85**2
    expected_off = 0.15 * 0.85
    np.testing.assert_allclose(np.diag(b), [expected_diag] * 2, atol=1e-12)
    assert abs(b[0, 1] - expected_off) < 1e-12
    assert abs(b[1, 0] - expected_off) < 1e-12


def test_diffuse_is_cached_and_shared():
    g = triangle()
    cfg = DiffusionConfig()
    first = diffuse(g, cfg)
    second = diffuse(g, cfg)
    assert first is second
    third = diffuse(g, DiffusionConfig(alpha=0.15, depth=4))
    assert third is not first


def test_diffuse_commutes_with_permutation():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(2, 8))
        a = (rng.random((n, n)) < 0.5).astype(float)
        a = np.triu(a, 1)
        a = a + a.T
        g = Graph(n, a, np.zeros((n, 1)))
        perm = rng.permutation(n)
        cfg = DiffusionConfig(alpha=0.2, depth=3)
        b = diffuse(g, cfg)
        b_perm = diffuse(g.permuted(perm), cfg)
        np.testing.assert_allclose(b_perm, b[np.ix_(perm, perm)], atol=1e-12)


def test_diffusion_config_validation():
    with pytest.raises(ConfigError):
        DiffusionConfig(alpha=0.0)
    with pytest.raises(ConfigError):
        DiffusionConfig(alpha=1.5)
    with pytest.raises(ConfigError):
        DiffusionConfig(depth=-1)


def test_degree_features():
    np.testing.assert_array_equal(degree_features(triangle()), np.full((3, 1), 2.0))


# ---------------------------------------------------------------------------
# TU format
# ---------------------------------------------------------------------------

def write_fixture(tmp_path, with_node_labels=False, with_attrs=False):
    d = tmp_path / "TOY"
    d.mkdir()
    # graph 1: triangle over nodes 1-3; graph 2: single edge over nodes 4-5
    (d / "TOY_A.txt").write_text(
        "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n")
    (d / "TOY_graph_indicator.txt").write_text("1\n1\n1\n2\n2\n")
    (d / "TOY_graph_labels.txt").write_text("1\n-1\n")
    if with_node_labels:
        (d / "TOY_node_labels.txt").write_text("0\n1\n0\n2\n1\n")
    if with_attrs:
        (d / "TOY_node_attributes.txt").write_text(
            "0.5, 1.0\n0.1, 0.2\n0.0, 0.0\n2.0, 3.0\n4.0, 5.0\n")
    return str(d)


def test_load_tu_basic(tmp_path):
    ds = load_tu_dataset(write_fixture(tmp_path), "TOY")
    assert len(ds) == 2
    assert ds.num_classes == 2
    g1, g2 = ds.graphs
    assert g1.n == 3 and g1.num_edges() == 3
    assert g2.n == 2 and g2.num_edges() == 1
    # labels remapped to 0-based in sorted order: -1 -> 0, 1 -> 1
    assert g1.label == 1 and g2.label == 0
    # no node files: degree feature
    np.testing.assert_array_equal(g1.features, np.full((3, 1), 2.0))
    np.testing.assert_array_equal(g2.features, np.full((2, 1), 1.0))


def test_load_tu_node_labels_one_hot(tmp_path):
    ds = load_tu_dataset(write_fixture(tmp_path, with_node_labels=True), "TOY")
    assert ds.feature_dim == 3
    np.testing.assert_array_equal(ds.graphs[0].features,
                                  np.array([[1, 0, 0], [0, 1, 0], [1, 0, 0]], dtype=float))
    np.testing.assert_array_equal(ds.graphs[1].features,
                                  np.array([[0, 0, 1], [0, 1, 0]], dtype=float))


def test_load_tu_labels_and_attributes_concat(tmp_path):
    ds = load_tu_dataset(write_fixture(tmp_path, with_node_labels=True,
                                       with_attrs=True), "TOY")
    assert ds.feature_dim == 5
    # one-hot block first, then attributes
    np.testing.assert_array_equal(ds.graphs[0].features[0],
                                  np.array([1, 0, 0, 0.5, 1.0]))
    np.testing.assert_array_equal(ds.graphs[1].features[1],
                                  np.array([0, 1, 0, 4.0, 5.0]))


def test_load_tu_missing_file(tmp_path):
    d = write_fixture(tmp_path)
    import os
    os.remove(os.path.join(d, "TOY_graph_labels.txt"))
    with pytest.raises(LoadError) as exc:
        load_tu_dataset(d, "TOY")
    assert "graph_labels" in str(exc.value)


def test_load_tu_malformed_edge(tmp_path):
    d = write_fixture(tmp_path)
    import os
    with open(os.path.join(d, "TOY_A.txt"), "a") as fh:
        fh.write("7\n")
    with pytest.raises(FormatError) as exc:
        load_tu_dataset(d, "TOY")
    assert ":9:" in str(exc.value)


def test_load_tu_cross_graph_edge(tmp_path):
    d = write_fixture(tmp_path)
    import os
    with open(os.path.join(d, "TOY_A.txt"), "a") as fh:
        fh.write("3, 4\n")
    with pytest.raises(FormatError):
        load_tu_dataset(d, "TOY")


def test_tu_round_trip(tmp_path):
    ds = load_tu_dataset(write_fixture(tmp_path, with_attrs=True), "TOY")
    out = tmp_path / "out"
    write_tu_dataset(ds, str(out), "TOY")
    again = load_tu_dataset(str(out), "TOY")
    assert len(again) == len(ds)
    for g, h in zip(ds.graphs, again.graphs):
        np.testing.assert_array_equal(g.adjacency, h.adjacency)
        np.testing.assert_allclose(g.features, h.features, atol=0)
        assert g.label == h.label


def test_load_is_deterministic(tmp_path):
    d = write_fixture(tmp_path, with_node_labels=True)
    a = load_tu_dataset(d, "TOY")
    b = load_tu_dataset(d, "TOY")
    for g, h in zip(a.graphs, b.graphs):
        np.testing.assert_array_equal(g.adjacency, h.adjacency)
        np.testing.assert_array_equal(g.features, h.features)


# ---------------------------------------------------------------------------
# fold splitting
# ---------------------------------------------------------------------------

def toy_dataset(per_class=12, classes=2):
    graphs = []
    for c in range(classes):
        for _ in range(per_class):
            g = edge_graph()
            g.label = c
            graphs.append(g)
    return Dataset(graphs, classes, 1, "toy")


def test_folds_partition_test_sets():
    ds = toy_dataset()
    folds = stratified_folds(ds, 4, seed=0)
    assert len(folds) == 4
    all_test = sorted(i for f in folds for i in f.test_idx)
    assert all_test == list(range(len(ds)))
    for f in folds:
        combined = sorted(f.train_idx + f.val_idx + f.test_idx)
        assert combined == list(range(len(ds)))
        assert not (set(f.train_idx) & set(f.val_idx))
        assert not (set(f.train_idx) & set(f.test_idx))
        assert not (set(f.val_idx) & set(f.test_idx))


def test_folds_are_stratified():
    ds = toy_dataset(per_class=20)
    labels = ds.labels()
    for f in stratified_folds(ds, 5, seed=1):
        test_labels = labels[f.test_idx]
        assert (test_labels == 0).sum() == 4
        assert (test_labels == 1).sum() == 4
        val_labels = labels[f.val_idx]
        assert (val_labels == 0).sum() >= 1
        assert (val_labels == 1).sum() >= 1


def test_folds_deterministic_per_seed():
    ds = toy_dataset()
    a = stratified_folds(ds, 3, seed=7)
    b = stratified_folds(ds, 3, seed=7)
    c = stratified_folds(ds, 3, seed=8)
    assert all(x.test_idx == y.test_idx for x, y in zip(a, b))
    assert any(x.test_idx != y.test_idx for x, y in zip(a, c))


def test_folds_config_errors():
    ds = toy_dataset(per_class=3)
    with pytest.raises(ConfigError):
        stratified_folds(ds, 1, seed=0)
    with pytest.raises(ConfigError):
        stratified_folds(ds, 4, seed=0)  # class smaller than k
