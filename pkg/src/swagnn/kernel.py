"""Hidden-graph kernel encoder.

A graph is compared against M small trainable hidden graphs through a
random-walk kernel smoothed by graph diffusion.  The kernel value for
walk length p is trace(B^p S B'^p S^T) with S the cross inner-product
matrix between mapped input features and hidden features; the encoding
concatenates these scalars for p = 1..P over all hidden graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .graphs import DiffusionConfig, Graph, diffuse


@dataclass(frozen=True)
class KernelConfig:
    num_hidden: int = 16
    hidden_nodes: int = 10
    hidden_dim: int = 32
    max_walk: int = 3
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)

    def __post_init__(self):
        if self.num_hidden < 1:
            raise ConfigError(f"KernelConfig: num_hidden must be >= 1, got {self.num_hidden}")
        if self.hidden_nodes < 2:
            raise ConfigError(f"KernelConfig: hidden_nodes must be >= 2, got {self.hidden_nodes}")
        if self.hidden_dim < 1:
            raise ConfigError(f"KernelConfig: hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.max_walk < 1:
            raise ConfigError(f"KernelConfig: max_walk must be >= 1, got {self.max_walk}")

    @property
    def output_dim(self) -> int:
        return self.num_hidden * self.max_walk


class HiddenGraph:
    """A trainable weighted graph on a fixed small node set."""

    def __init__(self, raw_weights: Tensor, hidden_features: Tensor):
        m = raw_weights.data.shape[0]
        if raw_weights.data.shape != (m, m):
            raise ContractError("HiddenGraph: raw_weights must be square")
        if m < 2:
            raise ContractError("HiddenGraph: needs at least 2 nodes")
        if hidden_features.data.shape[0] != m:
            raise ContractError("HiddenGraph: one feature row per node required")
        self.raw_weights = raw_weights
        self.hidden_features = hidden_features

    @property
    def num_nodes(self) -> int:
        return self.raw_weights.data.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.hidden_features.data.shape[1]

    @classmethod
    def init(cls, m: int, d_h: int, rng: np.random.Generator) -> "HiddenGraph":
        raw = ad.parameter(rng.standard_normal((m, m)))
        feats = ad.parameter(rng.standard_normal((m, d_h)) / np.sqrt(d_h))
        return cls(raw, feats)


def hidden_adjacency(h: HiddenGraph) -> Tensor:
    """Effective adjacency: sigmoid of the symmetrized raw weights with a
    zero diagonal.  Symmetric with entries in (0,1) by construction."""
    sym = ad.scale(h.raw_weights + h.raw_weights.transpose(), 0.5)
    mask = ad.constant(1.0 - np.eye(h.num_nodes))
    return sym.sigmoid() * mask


class FeatureMap:
    """Trainable affine map aligning input features with hidden features."""

    def __init__(self, weight: Tensor, bias: Tensor):
        if weight.data.shape[1] != bias.data.shape[0]:
            raise ContractError("FeatureMap: bias length must match output dim")
        self.weight = weight
        self.bias = bias

    @property
    def input_dim(self) -> int:
        return self.weight.data.shape[0]

    @property
    def output_dim(self) -> int:
        return self.weight.data.shape[1]

    @classmethod
    def init(cls, d: int, d_h: int, rng: np.random.Generator) -> "FeatureMap":
        bound = 1.0 / np.sqrt(d)
        weight = ad.parameter(rng.uniform(-bound, bound, size=(d, d_h)))
        bias = ad.parameter(rng.uniform(-bound, bound, size=d_h))
        return cls(weight, bias)

    def __call__(self, features: np.ndarray) -> Tensor:
        if features.shape[1] != self.input_dim:
            raise ContractError(f"FeatureMap: expected {self.input_dim} input features, "
                                f"got {features.shape[1]}")
        return ad.constant(features) @ self.weight + self.bias


class SwagParams:
    """All trainable encoder state: M hidden graphs plus the feature map."""

    def __init__(self, hidden_graphs: list, feature_map: FeatureMap):
        if not hidden_graphs:
            raise ContractError("SwagParams: at least one hidden graph required")
        m = hidden_graphs[0].num_nodes
        d_h = hidden_graphs[0].feature_dim
        for h in hidden_graphs:
            if h.num_nodes != m or h.feature_dim != d_h:
                raise ContractError("SwagParams: hidden graphs must share shapes")
        if feature_map.output_dim != d_h:
            raise ContractError("SwagParams: feature map output dim must match hidden features")
        self.hidden_graphs = hidden_graphs
        self.feature_map = feature_map

    @classmethod
    def init(cls, cfg: KernelConfig, input_dim: int, rng: np.random.Generator) -> "SwagParams":
        graphs = [HiddenGraph.init(cfg.hidden_nodes, cfg.hidden_dim, rng)
                  for _ in range(cfg.num_hidden)]
        return cls(graphs, FeatureMap.init(input_dim, cfg.hidden_dim, rng))

    def parameters(self) -> list:
        out = [self.feature_map.weight, self.feature_map.bias]
        for h in self.hidden_graphs:
            out.extend([h.raw_weights, h.hidden_features])
        return out

    def copy(self) -> "SwagParams":
        graphs = [HiddenGraph(ad.parameter(h.raw_weights.data.copy()),
                              ad.parameter(h.hidden_features.data.copy()))
                  for h in self.hidden_graphs]
        fm = FeatureMap(ad.parameter(self.feature_map.weight.data.copy()),
                        ad.parameter(self.feature_map.bias.data.copy()))
        return SwagParams(graphs, fm)

    def to_state(self) -> dict:
        state = {"fm_weight": self.feature_map.weight.data.copy(),
                 "fm_bias": self.feature_map.bias.data.copy()}
        for i, h in enumerate(self.hidden_graphs):
            state[f"hg{i}_raw"] = h.raw_weights.data.copy()
            state[f"hg{i}_features"] = h.hidden_features.data.copy()
        return state

    @classmethod
    def from_state(cls, state: dict) -> "SwagParams":
        graphs = []
        i = 0
        while f"hg{i}_raw" in state:
            graphs.append(HiddenGraph(ad.parameter(np.asarray(state[f"hg{i}_raw"])),
                                      ad.parameter(np.asarray(state[f"hg{i}_features"]))))
            i += 1
        fm = FeatureMap(ad.parameter(np.asarray(state["fm_weight"])),
                        ad.parameter(np.asarray(state["fm_bias"])))
        return cls(graphs, fm)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def exact_rw_kernel(g: Graph, g2: Graph, p: int) -> float:
    """Reference walk kernel, evaluated as the explicit quadruple sum.

    Counts feature-weighted pairs of length-p walks across the two graphs.
    Deliberately unfactorized so it can serve as an oracle for the trace
    formulation; only usable on small graphs.
    """
    if g.feature_dim != g2.feature_dim:
        raise ContractError("exact_rw_kernel: feature dimensions differ")
    if p < 1:
        raise ContractError(f"exact_rw_kernel: walk length must be >= 1, got {p}")
    ap = np.linalg.matrix_power(g.adjacency, p)
    ap2 = np.linalg.matrix_power(g2.adjacency, p)
    x, x2 = g.features, g2.features
    total = 0.0
    for i in range(g.n):
        for j in range(g.n):
            for k in range(g2.n):
                for l in range(g2.n):
                    total += float(x[i] @ x2[k]) * ap[i, j] * ap2[k, l] * float(x[j] @ x2[l])
    return total


def smoothed_kernel(B, Xm, h: HiddenGraph, p: int) -> Tensor:
    """trace(B^p S B'^p S^T) with S = Xm @ hidden_features^T.

    Powers are built by repeated multiplication against the accumulated
    n x m product, so no n x n power matrix is ever formed.
    """
    if p < 1:
        raise ContractError(f"smoothed_kernel: walk length must be >= 1, got {p}")
    b = B if isinstance(B, Tensor) else ad.constant(B)
    xm = Xm if isinstance(Xm, Tensor) else ad.constant(Xm)
    if xm.data.shape[1] != h.feature_dim:
        raise ContractError("smoothed_kernel: mapped features do not match hidden features")
    if b.data.shape != (xm.data.shape[0],) * 2:
        raise ContractError("smoothed_kernel: B must be square over the graph nodes")

    s = xm @ h.hidden_features.transpose()
    s_t = s.transpose()
    b_hid = hidden_adjacency(h)
    left = b @ s          # B^q S, accumulated
    right = b_hid @ s_t   # B'^q S^T, accumulated
    for _ in range(p - 1):
        left = b @ left
        right = b_hid @ right
    return ad.trace_product(left, right)


def _encode_one(b: Tensor, xm: Tensor, params: SwagParams, cfg: KernelConfig,
                hidden_sides: list) -> Tensor:
    """Kernel values for one graph against every hidden graph, as a 1-D
    tensor ordered hidden-graph-major, walk-length-minor."""
    values = []
    for h, b_hid_pows in zip(params.hidden_graphs, hidden_sides):
        s = xm @ h.hidden_features.transpose()
        s_t = s.transpose()
        left = b @ s
        for q in range(cfg.max_walk):
            values.append(ad.trace_product(left @ b_hid_pows[q], s_t))
            if q + 1 < cfg.max_walk:
                left = b @ left
    return ad.concat(values)


def _hidden_power_chains(params: SwagParams, cfg: KernelConfig) -> list:
    """Per hidden graph, the chain [B', B'^2, ..., B'^P]; shared across a
    batch so the m x m multiplications happen once per step."""
    chains = []
    for h in params.hidden_graphs:
        b_hid = hidden_adjacency(h)
        pows = [b_hid]
        for _ in range(cfg.max_walk - 1):
            pows.append(b_hid @ pows[-1])
        chains.append(pows)
    return chains


def swag_encode(g: Graph, params: SwagParams, cfg: KernelConfig) -> Tensor:
    """Encode one graph as the M*P vector of smoothed kernel values."""
    b = ad.constant(diffuse(g, cfg.diffusion))
    xm = params.feature_map(g.features)
    return _encode_one(b, xm, params, cfg, _hidden_power_chains(params, cfg))


def _batch_constants(cfg: KernelConfig):
    """Constant index helpers for the merged hidden-graph layout: a column
    block-sum matrix and the permutation from walk-major to the documented
    hidden-graph-major output order."""
    m, M, P = cfg.hidden_nodes, cfg.num_hidden, cfg.max_walk
    group = np.zeros((M * m, M))
    for h in range(M):
        group[h * m:(h + 1) * m, h] = 1.0
    perm = np.zeros((M * P, M * P))
    for p in range(P):
        for h in range(M):
            perm[p * M + h, h * P + p] = 1.0
    return ad.constant(group), ad.constant(perm)


def encode_batch(graphs: list, params: SwagParams, cfg: KernelConfig) -> Tensor:
    """Encode a batch into a len(graphs) x M*P tensor (rows in input order).

    All hidden graphs are merged into one block-diagonal system so the
    hidden-side products happen once per batch: with S = Xm F^T over the
    concatenated hidden features F, the kernel for hidden graph h at walk
    length p is the block-h column sum of (B^p S) * (S Bhid^p).
    """
    if not graphs:
        raise ContractError("encode_batch: empty batch")
    feats_all = ad.concat_rows([h.hidden_features for h in params.hidden_graphs])
    bhid_all = ad.block_diag([hidden_adjacency(h) for h in params.hidden_graphs])
    # right-hand factors F^T Bhid^p, shared by every graph in the batch
    right = [feats_all.transpose() @ bhid_all]
    for _ in range(cfg.max_walk - 1):
        right.append(right[-1] @ bhid_all)
    group, perm = _batch_constants(cfg)

    rows = []
    for g in graphs:
        b = ad.constant(diffuse(g, cfg.diffusion))
        xm = params.feature_map(g.features)
        s_all = xm @ feats_all.transpose()
        left = b @ s_all
        per_walk = []
        for q in range(cfg.max_walk):
            per_walk.append(ad.reduce_sum((left * (xm @ right[q])) @ group, axis=0))
            if q + 1 < cfg.max_walk:
                left = b @ left
        rows.append(ad.concat(per_walk))
    return ad.stack_rows(rows) @ perm


def encode_numpy(graphs: list, params: SwagParams, cfg: KernelConfig) -> np.ndarray:
    """Gradient-free encoding used for evaluation and frozen-encoder runs.

    Same merged-hidden-graph evaluation as encode_batch, without the tape.
    """
    m, M, P = cfg.hidden_nodes, cfg.num_hidden, cfg.max_walk
    fm_w = params.feature_map.weight.data
    fm_b = params.feature_map.bias.data
    feats_all = np.concatenate([h.hidden_features.data for h in params.hidden_graphs])
    mask = 1.0 - np.eye(m)
    blocks = []
    for h in params.hidden_graphs:
        raw = h.raw_weights.data
        blocks.append(_sigmoid(0.5 * (raw + raw.T)) * mask)
    bhid_all = np.zeros((M * m, M * m))
    for i, blk in enumerate(blocks):
        bhid_all[i * m:(i + 1) * m, i * m:(i + 1) * m] = blk
    right = [feats_all.T @ bhid_all]
    for _ in range(P - 1):
        right.append(right[-1] @ bhid_all)

    out = np.empty((len(graphs), cfg.output_dim))
    for gi, g in enumerate(graphs):
        b = diffuse(g, cfg.diffusion)
        xm = g.features @ fm_w + fm_b
        s_all = xm @ feats_all.T
        left = b @ s_all
        for q in range(P):
            per_block = (left * (xm @ right[q])).sum(axis=0).reshape(M, m).sum(axis=1)
            out[gi, q::P] = per_block
            if q + 1 < P:
                left = b @ left
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    pos = x >= 0
    z = np.exp(-np.abs(x))
    return np.where(pos, 1.0 / (1.0 + z), z / (1.0 + z))
