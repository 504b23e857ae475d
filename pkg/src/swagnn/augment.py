"""Latent graph augmentation.

An anchor graph's adjacency is treated as a noisy realization of an
edge-probability matrix.  Spectral thresholding recovers an estimate of
that matrix, and positives for self-supervision are drawn from it as
fresh Bernoulli samples.  Node features always carry over verbatim.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, NumericalError
from .graphs import Graph

_OFFDIAG_TOL = 1e-12
_MAX_SWEEPS = 100


@dataclass(frozen=True)
class AugmenterConfig:
    tau: float = 2.02
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError(f"AugmenterConfig: tau must be positive, got {self.tau}")


@dataclass
class SpectralDecomposition:
    """Eigenpairs of a symmetric matrix, sorted by descending |eigenvalue|."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self, keep: int = None) -> np.ndarray:
        k = len(self.eigenvalues) if keep is None else keep
        u = self.eigenvectors[:, :k]
        return (u * self.eigenvalues[:k]) @ u.T


def symmetric_eig(a: np.ndarray) -> SpectralDecomposition:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Rotations sweep the upper triangle until every off-diagonal magnitude
    drops below 1e-12; each rotation zeroes one entry and preserves
    symmetry, so the diagonal converges to the eigenvalues while the
    accumulated rotations form the eigenvector columns.
    """
    a = np.asarray(a, dtype=np.float64)
    m = a.shape[0]
    if a.shape != (m, m):
        raise ContractError("symmetric_eig: input must be square")
    if m and np.max(np.abs(a - a.T)) > _OFFDIAG_TOL:
        raise ContractError("symmetric_eig: input is not symmetric")

    work = 0.5 * (a + a.T)
    vecs = np.eye(m)
    off_mask = ~np.eye(m, dtype=bool)

    def max_offdiag():
        return np.max(np.abs(work[off_mask])) if m > 1 else 0.0

    for _ in range(_MAX_SWEEPS):
        if max_offdiag() < _OFFDIAG_TOL:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = work[p, q]
                if abs(apq) < _OFFDIAG_TOL / (10 * m):
                    continue
                theta = (work[q, q] - work[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                row_p, row_q = work[p, :].copy(), work[q, :].copy()
                work[p, :] = c * row_p - s * row_q
                work[q, :] = s * row_p + c * row_q
                col_p, col_q = work[:, p].copy(), work[:, q].copy()
                work[:, p] = c * col_p - s * col_q
                work[:, q] = s * col_p + c * col_q
                vec_p, vec_q = vecs[:, p].copy(), vecs[:, q].copy()
                vecs[:, p] = c * vec_p - s * vec_q
                vecs[:, q] = s * vec_p + c * vec_q
    else:
        residual = max_offdiag()
        if residual >= _OFFDIAG_TOL:
            raise NumericalError(f"symmetric_eig: no convergence after {_MAX_SWEEPS} "
                                 f"sweeps, off-diagonal residual {residual:.3e}")

    values = np.diag(work).copy()
    order = np.argsort(-np.abs(values), kind="stable")
    return SpectralDecomposition(values[order], vecs[:, order])


def usvt_with_rank(a: np.ndarray, tau: float):
    """Thresholded spectral estimate of the edge-probability matrix and the
    number of spectral components kept."""
    m = a.shape[0]
    dec = symmetric_eig(a)
    kept = np.abs(dec.eigenvalues) >= tau * math.sqrt(m)
    u = dec.eigenvectors[:, kept]
    theta = (u * dec.eigenvalues[kept]) @ u.T
    theta = np.clip(theta, 0.0, 1.0)
    theta = 0.5 * (theta + theta.T)
    return theta, int(kept.sum())


def usvt_estimate(a: np.ndarray, tau: float) -> np.ndarray:
    """Spectral components with magnitude >= tau*sqrt(m) (ties kept),
    reconstructed and clipped entrywise to [0,1]."""
    theta, _ = usvt_with_rank(a, tau)
    return theta


def sample_augmentation(theta: np.ndarray, seed) -> np.ndarray:
    """One Bernoulli draw per upper-triangle entry, mirrored; zero diagonal."""
    if np.any(theta < 0) or np.any(theta > 1):
        raise ContractError("sample_augmentation: probabilities must lie in [0,1]")
    m = theta.shape[0]
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(m, k=1)
    draws = (rng.random(len(iu[0])) < theta[iu]).astype(np.float64)
    out = np.zeros((m, m))
    out[iu] = draws
    return out + out.T


def generate_sbm(block_sizes, intra: float, inter: float, seed) -> Graph:
    """Stochastic block model sample with degree features attached."""
    for p in (intra, inter):
        if not (0.0 <= p <= 1.0):
            raise ConfigError(f"generate_sbm: probability {p} outside [0,1]")
    labels = np.repeat(np.arange(len(block_sizes)), block_sizes)
    same = labels[:, None] == labels[None, :]
    theta = np.where(same, intra, inter).astype(np.float64)
    adjacency = sample_augmentation(theta, seed)
    g = Graph(int(adjacency.shape[0]), adjacency, np.zeros((adjacency.shape[0], 1)))
    g.features = adjacency.sum(axis=1, keepdims=True)
    return g


def sbm_probability_matrix(block_sizes, intra: float, inter: float) -> np.ndarray:
    labels = np.repeat(np.arange(len(block_sizes)), block_sizes)
    same = labels[:, None] == labels[None, :]
    return np.where(same, intra, inter).astype(np.float64)


def edge_drop_baseline(g: Graph, rate: float, seed) -> Graph:
    """Remove each existing edge independently with the given probability."""
    if not (0.0 <= rate <= 1.0):
        raise ConfigError(f"edge_drop_baseline: rate {rate} outside [0,1]")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(g.n, k=1)
    keep = rng.random(len(iu[0])) >= rate
    out = np.zeros((g.n, g.n))
    out[iu] = g.adjacency[iu] * keep
    return Graph(g.n, out + out.T, g.features, g.label)


# ---------------------------------------------------------------------------
# augmenter objects used by pretraining and the CLI
# ---------------------------------------------------------------------------

class LgaAugmenter:
    """Draws positives from a cached spectral estimate of each anchor.

    The estimate is computed once per graph (the eigendecomposition
    dominates), while every (graph index, epoch) pair gets an independent
    reproducible sampling stream.
    """

    name = "lga"

    def __init__(self, tau: float, seed: int = 0):
        if tau <= 0:
            raise ConfigError(f"LgaAugmenter: tau must be positive, got {tau}")
        self.tau = tau
        self.seed = seed
        self._cache = weakref.WeakKeyDictionary()

    def _estimate(self, g: Graph):
        cached = self._cache.get(g)
        if cached is None:
            cached = usvt_with_rank(g.adjacency, self.tau)
            self._cache[g] = cached
        return cached

    def kept_rank(self, g: Graph) -> int:
        return self._estimate(g)[1]

    def augment(self, g: Graph, index: int, epoch: int) -> Graph:
        theta, _ = self._estimate(g)
        adjacency = sample_augmentation(theta, [self.seed, index, epoch])
        return Graph(g.n, adjacency, g.features, g.label)


class EdgeDropAugmenter:
    name = "edge-drop"

    def __init__(self, rate: float, seed: int = 0):
        if not (0.0 <= rate <= 1.0):
            raise ConfigError(f"EdgeDropAugmenter: rate {rate} outside [0,1]")
        self.rate = rate
        self.seed = seed

    def augment(self, g: Graph, index: int, epoch: int) -> Graph:
        return edge_drop_baseline(g, self.rate, [self.seed, index, epoch])


class IdentityAugmenter:
    name = "identity"

    def augment(self, g: Graph, index: int, epoch: int) -> Graph:
        return g


def make_augmenter(name: str, tau: float = 2.02, drop_rate: float = 0.2,
                   seed: int = 0):
    if name == "lga":
        return LgaAugmenter(tau, seed)
    if name == "edge-drop":
        return EdgeDropAugmenter(drop_rate, seed)
    if name == "identity":
        return IdentityAugmenter()
    raise ConfigError(f"unknown augmenter {name!r} (expected lga, edge-drop or identity)")
