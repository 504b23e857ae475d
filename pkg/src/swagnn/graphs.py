"""Graph data model, TU-format text I/O, diffusion and fold splitting.

Graphs are stored densely: datasets at desk scale fit comfortably in
memory and the encoder consumes dense matrices anyway.
"""

from __future__ import annotations

import math
import os
import weakref
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractError, FormatError, LoadError


@dataclass(eq=False)
class Graph:
    """An undirected simple graph with per-node features.

    ``adjacency`` is a symmetric 0/1 matrix with zero diagonal and
    ``features`` has one row per node.  ``label`` is a 0-based class
    index, or None for unlabeled graphs.
    """

    n: int
    adjacency: np.ndarray
    features: np.ndarray
    label: Optional[int] = None

    def validate(self) -> "Graph":
        if self.n <= 0:
            raise ContractError("Graph: node count must be positive")
        a = self.adjacency
        if a.shape != (self.n, self.n):
            raise ContractError(f"Graph: adjacency shape {a.shape} != ({self.n}, {self.n})")
        if not np.array_equal(a, a.T):
            raise ContractError("Graph: adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ContractError("Graph: adjacency diagonal must be zero")
        if self.features.ndim != 2 or self.features.shape[0] != self.n:
            raise ContractError("Graph: features must have one row per node")
        return self

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def num_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    def copy(self) -> "Graph":
        return Graph(self.n, self.adjacency.copy(), self.features.copy(), self.label)

    def permuted(self, perm: np.ndarray) -> "Graph":
        """Relabel nodes: node i of the result is node perm[i] of self."""
        p = np.asarray(perm)
        return Graph(self.n, self.adjacency[np.ix_(p, p)], self.features[p], self.label)


@dataclass
class Dataset:
    graphs: list
    num_classes: int
    feature_dim: int
    name: str

    def __post_init__(self):
        for g in self.graphs:
            if g.feature_dim != self.feature_dim:
                raise ContractError(f"Dataset {self.name}: inconsistent feature dims")
            if g.label is not None and not (0 <= g.label < self.num_classes):
                raise ContractError(f"Dataset {self.name}: label {g.label} out of range")

    def __len__(self):
        return len(self.graphs)

    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)


@dataclass(frozen=True)
class DiffusionConfig:
    """Personalized-PageRank style diffusion: coefficients alpha*(1-alpha)^j
    over transition-matrix powers, truncated at ``depth``."""

    alpha: float = 0.15
    depth: int = 3

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"DiffusionConfig: alpha must be in (0,1), got {self.alpha}")
        if self.depth < 0:
            raise ConfigError(f"DiffusionConfig: depth must be non-negative, got {self.depth}")

    def coefficients(self) -> np.ndarray:
        j = np.arange(self.depth + 1)
        return self.alpha * (1.0 - self.alpha) ** j


@dataclass
class FoldSplit:
    train_idx: list
    val_idx: list
    test_idx: list


# ---------------------------------------------------------------------------
# featurization and diffusion
# ---------------------------------------------------------------------------

def degree_features(g: Graph) -> np.ndarray:
    """Node degree as a single real-valued feature column."""
    return g.adjacency.sum(axis=1, keepdims=True).astype(np.float64)


def transition_matrix(g: Graph) -> np.ndarray:
    """Symmetric normalization D^{-1/2} A D^{-1/2}.

    Isolated nodes get all-zero rows and columns: a degree of zero maps to
    a zero scaling factor rather than a division error, so the node simply
    does not diffuse.
    """
    deg = g.adjacency.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    return g.adjacency * np.outer(inv_sqrt, inv_sqrt)


_DIFFUSION_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def diffuse(g: Graph, cfg: DiffusionConfig) -> np.ndarray:
    """Truncated diffusion sum over transition-matrix powers.

    The result is cached per (graph, config) and shared between callers;
    treat it as read-only.
    """
    per_graph = _DIFFUSION_CACHE.get(g)
    if per_graph is not None:
        cached = per_graph.get(cfg)
        if cached is not None:
            return cached

    t = transition_matrix(g)
    coeffs = cfg.coefficients()
    power = np.eye(g.n)
    out = coeffs[0] * power
    for j in range(1, cfg.depth + 1):
        power = power @ t
        out += coeffs[j] * power

    if per_graph is None:
        per_graph = {}
        _DIFFUSION_CACHE[g] = per_graph
    per_graph[cfg] = out
    return out


# ---------------------------------------------------------------------------
# TU text format
# ---------------------------------------------------------------------------

def _read_lines(path: str) -> list:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from exc


def load_tu_dataset(directory: str, name: str) -> Dataset:
    """Load a dataset in the TU plain-text layout.

    Mandatory files: ``<name>_A.txt`` (comma-separated 1-based edge list),
    ``<name>_graph_indicator.txt`` (1-based graph id per node) and
    ``<name>_graph_labels.txt`` (one integer per graph).  Optional
    ``<name>_node_labels.txt`` entries are one-hot encoded and optional
    ``<name>_node_attributes.txt`` rows are taken verbatim; when both
    exist they are concatenated with the one-hot block first.  Without
    either, node degree is used as the single feature.
    """
    paths = {key: os.path.join(directory, f"{name}_{key}.txt")
             for key in ("A", "graph_indicator", "graph_labels",
                         "node_labels", "node_attributes")}
    for key in ("A", "graph_indicator", "graph_labels"):
        if not os.path.isfile(paths[key]):
            raise LoadError(f"missing mandatory file {paths[key]}")

    indicator = [int(line) for line in _read_lines(paths["graph_indicator"])]
    if not indicator:
        raise LoadError(f"{paths['graph_indicator']} contains no node entries")
    graph_ids = sorted(set(indicator))
    num_nodes = len(indicator)

    # global 1-based node id -> (graph position, local 0-based node index)
    node_graph = np.empty(num_nodes, dtype=np.int64)
    node_local = np.empty(num_nodes, dtype=np.int64)
    sizes = {gid: 0 for gid in graph_ids}
    gid_pos = {gid: i for i, gid in enumerate(graph_ids)}
    for node, gid in enumerate(indicator):
        node_graph[node] = gid_pos[gid]
        node_local[node] = sizes[gid]
        sizes[gid] += 1

    adjacencies = [np.zeros((sizes[gid], sizes[gid])) for gid in graph_ids]
    for lineno, line in enumerate(_read_lines(paths["A"]), start=1):
        parts = line.split(",")
        if len(parts) != 2:
            raise FormatError(f"{paths['A']}:{lineno}: expected 'u, v'")
        u, v = int(parts[0]), int(parts[1])
        if not (1 <= u <= num_nodes and 1 <= v <= num_nodes):
            raise FormatError(f"{paths['A']}:{lineno}: node id out of range")
        if node_graph[u - 1] != node_graph[v - 1]:
            raise FormatError(f"{paths['A']}:{lineno}: edge endpoint outside its graph")
        if u == v:
            continue  # self-loops are dropped
        a = adjacencies[node_graph[u - 1]]
        a[node_local[u - 1], node_local[v - 1]] = 1.0
        a[node_local[v - 1], node_local[u - 1]] = 1.0

    raw_labels = [int(line) for line in _read_lines(paths["graph_labels"])]
    if len(raw_labels) != len(graph_ids):
        raise FormatError(f"{paths['graph_labels']}: {len(raw_labels)} labels "
                          f"for {len(graph_ids)} graphs")
    classes = sorted(set(raw_labels))
    remap = {c: i for i, c in enumerate(classes)}
    labels = [remap[c] for c in raw_labels]

    features = _node_features(paths, indicator, adjacencies, node_graph, node_local)

    graphs = [Graph(adjacencies[i].shape[0], adjacencies[i], features[i],
                    labels[i]).validate()
              for i in range(len(graph_ids))]
    return Dataset(graphs, len(classes), graphs[0].feature_dim, name)


def _node_features(paths, indicator, adjacencies, node_graph, node_local):
    blocks = []
    if os.path.isfile(paths["node_labels"]):
        values = [int(line) for line in _read_lines(paths["node_labels"])]
        if len(values) != len(indicator):
            raise FormatError(f"{paths['node_labels']}: one entry per node required")
        categories = sorted(set(values))
        cat_pos = {c: i for i, c in enumerate(categories)}
        onehot = np.zeros((len(values), len(categories)))
        for node, value in enumerate(values):
            onehot[node, cat_pos[value]] = 1.0
        blocks.append(onehot)
    if os.path.isfile(paths["node_attributes"]):
        rows = [[float(x) for x in line.split(",")]
                for line in _read_lines(paths["node_attributes"])]
        if len(rows) != len(indicator):
            raise FormatError(f"{paths['node_attributes']}: one row per node required")
        blocks.append(np.array(rows))

    if blocks:
        full = np.concatenate(blocks, axis=1)
        per_graph = [np.zeros((a.shape[0], full.shape[1])) for a in adjacencies]
        for node in range(len(indicator)):
            per_graph[node_graph[node]][node_local[node]] = full[node]
        return per_graph
    return [a.sum(axis=1, keepdims=True) for a in adjacencies]


def write_tu_dataset(ds: Dataset, directory: str, name: str = None):
    """Write a dataset back out in TU text format (canonical edge order).

    Node features are emitted as ``_node_attributes.txt`` so that any
    feature matrix (including one-hot blocks) round-trips through
    ``load_tu_dataset``.
    """
    name = name or ds.name
    os.makedirs(directory, exist_ok=True)
    edge_lines, indicator_lines, label_lines, attr_lines = [], [], [], []
    offset = 0
    for gi, g in enumerate(ds.graphs, start=1):
        rows, cols = np.nonzero(g.adjacency)
        for u, v in sorted(zip(rows.tolist(), cols.tolist())):
            edge_lines.append(f"{offset + u + 1}, {offset + v + 1}")
        for u in range(g.n):
            indicator_lines.append(str(gi))
            attr_lines.append(", ".join(repr(float(x)) for x in g.features[u]))
        label_lines.append(str(g.label if g.label is not None else 0))
        offset += g.n

    for suffix, lines in (("A", edge_lines), ("graph_indicator", indicator_lines),
                          ("graph_labels", label_lines), ("node_attributes", attr_lines)):
        with open(os.path.join(directory, f"{name}_{suffix}.txt"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))


# ---------------------------------------------------------------------------
# cross-validation splits
# ---------------------------------------------------------------------------

def stratified_folds(ds: Dataset, k: int, seed: int) -> list:
    """K stratified splits whose test sets partition the dataset.

    Within each fold, roughly 10% of the non-test portion (rounded up per
    class, at least one graph per class where the class has graphs to
    spare) is held out for validation.
    """
    if k < 2:
        raise ConfigError(f"stratified_folds: k must be >= 2, got {k}")
    labels = ds.labels()
    if any(g.label is None for g in ds.graphs):
        raise ConfigError("stratified_folds: every graph needs a label")

    rng = np.random.default_rng(seed)
    by_class = {}
    for c in range(ds.num_classes):
        idx = np.flatnonzero(labels == c)
        if len(idx) < k:
            raise ConfigError(f"stratified_folds: class {c} has {len(idx)} members, needs >= {k}")
        by_class[c] = rng.permutation(idx)

    chunks = {c: np.array_split(by_class[c], k) for c in by_class}
    folds = []
    for f in range(k):
        test, val, train = [], [], []
        for c in by_class:
            test.extend(chunks[c][f].tolist())
            rest = np.concatenate([chunks[c][j] for j in range(k) if j != f])
            n_val = max(1, math.ceil(0.1 * len(rest)))
            n_val = min(n_val, len(rest) - 1) if len(rest) >= 2 else 0
            val.extend(rest[:n_val].tolist())
            train.extend(rest[n_val:].tolist())
        folds.append(FoldSplit(sorted(train), sorted(val), sorted(test)))
    return folds
