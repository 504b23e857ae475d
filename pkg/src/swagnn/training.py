"""Cross-validated training driver.

Supervised runs train the encoder and a small classifier jointly.
Self-supervised runs pretrain the encoder per fold on that fold's train
split only, then adapt by probing (frozen encoder) or fine-tuning.
Checkpoints are selected per fold by validation accuracy, earliest epoch
winning ties; the reported train accuracy is measured at the final epoch
as an optimization sanity signal.
"""

from __future__ import annotations

import dataclasses
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, TrainingError
from .graphs import (
    Dataset,
    DiffusionConfig,
    FoldSplit,
    Graph,
    degree_features,
    load_tu_dataset,
    stratified_folds,
)
from .kernel import KernelConfig, SwagParams, encode_batch, encode_numpy
from .ssl import (
    PredictionHead,
    ProjectionHead,
    TwoLayerMLP,
    infonce_loss,
    make_ssl_batch,
    noncontrastive_loss,
)
from .augment import make_augmenter

PREDICTOR_HIDDEN = 32
TAU_GUIDANCE = (0.3, 4.2)


@dataclass
class TrainConfig:
    dataset: str = "toy"
    data_dir: str = "."
    mode: str = "supervised"
    hidden_graphs: int = 16
    hidden_nodes: int = 10
    hidden_dim: int = 32
    walk_len: int = 3
    diff_steps: int = 3
    alpha: float = 0.15
    tau: float = 2.02
    drop_rate: float = 0.2
    augmenter: str = "lga"
    objective: str = "infonce"
    epochs: int = 200
    lr: float = 0.01
    batch_size: int = 64
    folds: int = 10
    seed: int = 0
    out: str = None

    def __post_init__(self):
        if self.mode not in ("supervised", "pretrain", "probe", "finetune"):
            raise ConfigError(f"TrainConfig: unknown mode {self.mode!r}")
        if self.objective not in ("infonce", "simsiam"):
            raise ConfigError(f"TrainConfig: unknown objective {self.objective!r}")
        if self.epochs < 1:
            raise ConfigError(f"TrainConfig: epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"TrainConfig: batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"TrainConfig: lr must be positive, got {self.lr}")

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(num_hidden=self.hidden_graphs,
                            hidden_nodes=self.hidden_nodes,
                            hidden_dim=self.hidden_dim,
                            max_walk=self.walk_len,
                            diffusion=DiffusionConfig(alpha=self.alpha,
                                                      depth=self.diff_steps))

    def make_augmenter(self):
        return make_augmenter(self.augmenter, tau=self.tau,
                              drop_rate=self.drop_rate, seed=self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"TrainConfig: unknown fields {sorted(unknown)}")
        return cls(**values)


@dataclass
class RunResult:
    fold_accuracies: list
    mean_accuracy: float
    std_accuracy: float
    wall_time: float
    config: dict
    mode: str
    loss_curves: list
    val_curves: list
    val_accuracies: list
    train_accuracies: list
    best_epochs: list
    fold_seconds: list
    # per-fold (encoder params, predictor) at the selected checkpoint;
    # kept out of serialized reports
    fold_states: list = field(default=None, repr=False, compare=False)

    @classmethod
    def aggregate(cls, folds: list, config: dict, mode: str,
                  wall_time: float) -> "RunResult":
        accs = [f["test_accuracy"] for f in folds]
        return cls(fold_accuracies=accs,
                   mean_accuracy=float(np.mean(accs)),
                   std_accuracy=float(np.std(accs)),
                   wall_time=wall_time,
                   config=config,
                   mode=mode,
                   loss_curves=[f["loss_curve"] for f in folds],
                   val_curves=[f["val_curve"] for f in folds],
                   val_accuracies=[f["val_accuracy"] for f in folds],
                   train_accuracies=[f["train_accuracy"] for f in folds],
                   best_epochs=[f["best_epoch"] for f in folds],
                   fold_seconds=[f["seconds"] for f in folds],
                   fold_states=[f["state"] for f in folds])


class Predictor(TwoLayerMLP):
    """Classifier head: encoding -> 32 -> class logits."""

    @classmethod
    def for_task(cls, input_dim: int, num_classes: int,
                 rng: np.random.Generator) -> "Predictor":
        return cls.init(input_dim, PREDICTOR_HIDDEN, num_classes, rng)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of the true classes."""
    onehot = np.zeros(logits.data.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    probs = ad.row_softmax(logits)
    picked = ad.reduce_sum(probs * ad.constant(onehot), axis=1)
    return ad.scale(picked.log().mean(), -1.0)


# ---------------------------------------------------------------------------
# dataset plumbing
# ---------------------------------------------------------------------------

def make_toy_dataset() -> Dataset:
    """Eight tiny graphs: four triangles (class 0), four 3-node paths
    (class 1).  Separable by any second-order walk statistic."""
    graphs = []
    tri = np.ones((3, 3)) - np.eye(3)
    path = np.zeros((3, 3))
    path[0, 1] = path[1, 0] = path[1, 2] = path[2, 1] = 1.0
    for label, adj in ((0, tri), (1, path)):
        for _ in range(4):
            g = Graph(3, adj.copy(), np.zeros((3, 1)), label)
            g.features = degree_features(g)
            graphs.append(g)
    return Dataset(graphs, 2, 1, "toy")


def load_dataset(cfg: TrainConfig) -> Dataset:
    if cfg.dataset == "toy":
        return make_toy_dataset()
    return load_tu_dataset(cfg.data_dir, cfg.dataset)


def _batch_indices(order: np.ndarray, batch_size: int, min_last: int = 1) -> list:
    """Consecutive batches over a shuffled index order; a trailing batch
    smaller than ``min_last`` is merged into the previous one."""
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) < min_last:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def _mlp_numpy(x: np.ndarray, head: TwoLayerMLP) -> np.ndarray:
    h = np.maximum(x @ head.w1.data + head.b1.data, 0.0)
    return h @ head.w2.data + head.b2.data


def _accuracy(encodings: np.ndarray, labels: np.ndarray, head: TwoLayerMLP) -> float:
    return float(np.mean(_mlp_numpy(encodings, head).argmax(axis=1) == labels))


def _snapshot(params_list: list) -> list:
    return [p.data.copy() for p in params_list]


def _restore(params_list: list, snapshot: list):
    for p, data in zip(params_list, snapshot):
        p.data = data.copy()


def _check_finite(value: float, what: str, fold: int, epoch: int):
    if not np.isfinite(value):
        raise TrainingError(f"{what} became non-finite at fold {fold}, epoch {epoch}")


# ---------------------------------------------------------------------------
# per-fold training
# ---------------------------------------------------------------------------

def _run_fold(ds: Dataset, split: FoldSplit, cfg: TrainConfig, kcfg: KernelConfig,
              fold: int, params: SwagParams = None, train_encoder: bool = True) -> dict:
    start = time.perf_counter()
    rng = np.random.default_rng([cfg.seed, fold])
    labels = ds.labels()
    if params is None:
        params = SwagParams.init(kcfg, ds.feature_dim, rng)
    predictor = Predictor.for_task(kcfg.output_dim, ds.num_classes, rng)

    trained = (params.parameters() if train_encoder else []) + predictor.parameters()
    opt = ad.Adam(trained, lr=cfg.lr)

    train_graphs = [ds.graphs[i] for i in split.train_idx]
    train_labels = labels[split.train_idx]
    val_graphs = [ds.graphs[i] for i in split.val_idx]
    val_labels = labels[split.val_idx]

    frozen = frozen_val = None
    if not train_encoder:
        # frozen encoder: encode each split once up front
        frozen = encode_numpy(train_graphs, params, kcfg)
        frozen_val = encode_numpy(val_graphs, params, kcfg)

    loss_curve, val_curve = [], []
    best_val, best_epoch, best_state = -1.0, -1, None
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_graphs))
        total, seen = 0.0, 0
        for idx in _batch_indices(order, cfg.batch_size):
            if train_encoder:
                enc = encode_batch([train_graphs[i] for i in idx], params, kcfg)
            else:
                enc = ad.constant(frozen[idx])
            loss = softmax_cross_entropy(predictor(enc), train_labels[idx])
            _check_finite(loss.item(), "training loss", fold, epoch)
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
            total += loss.item() * len(idx)
            seen += len(idx)
        loss_curve.append(total / seen)

        val_enc = encode_numpy(val_graphs, params, kcfg) if train_encoder else frozen_val
        val_acc = _accuracy(val_enc, val_labels, predictor)
        val_curve.append(val_acc)
        if val_acc > best_val:
            best_val, best_epoch = val_acc, epoch
            best_state = _snapshot(trained)

    final_train_acc = _accuracy(encode_numpy(train_graphs, params, kcfg),
                                train_labels, predictor)
    _restore(trained, best_state)
    test_graphs = [ds.graphs[i] for i in split.test_idx]
    test_acc = _accuracy(encode_numpy(test_graphs, params, kcfg),
                         labels[split.test_idx], predictor)
    return {"test_accuracy": test_acc,
            "val_accuracy": best_val,
            "train_accuracy": final_train_acc,
            "best_epoch": best_epoch,
            "loss_curve": loss_curve,
            "val_curve": val_curve,
            "seconds": time.perf_counter() - start,
            "state": (params, predictor)}


def train_supervised(cfg: TrainConfig, dataset: Dataset = None) -> RunResult:
    """Joint encoder + classifier training with k-fold evaluation."""
    if cfg.mode != "supervised":
        raise ConfigError(f"train_supervised: mode must be 'supervised', got {cfg.mode!r}")
    ds = dataset if dataset is not None else load_dataset(cfg)
    kcfg = cfg.kernel_config()
    folds = stratified_folds(ds, cfg.folds, cfg.seed)
    start = time.perf_counter()
    results = [_run_fold(ds, split, cfg, kcfg, fold)
               for fold, split in enumerate(folds)]
    return RunResult.aggregate(results, cfg.to_dict(), "supervised",
                               time.perf_counter() - start)


# ---------------------------------------------------------------------------
# self-supervised pretraining and adaptation
# ---------------------------------------------------------------------------

@dataclass
class PretrainResult:
    fold_params: list
    fold_heads: list
    loss_curves: list
    config: dict
    folds: list = field(default_factory=list)


def _pretrain_fold(ds: Dataset, split: FoldSplit, cfg: TrainConfig,
                   kcfg: KernelConfig, fold: int, augmenter, epochs: int):
    rng = np.random.default_rng([cfg.seed, fold, 1])
    params = SwagParams.init(kcfg, ds.feature_dim, rng)
    if cfg.objective == "infonce":
        head = ProjectionHead.for_encoder(kcfg.output_dim, rng)
        loss_fn, min_batch = infonce_loss, 2
    else:
        head = PredictionHead.for_encoder(kcfg.output_dim, rng)
        loss_fn, min_batch = noncontrastive_loss, 1
    opt = ad.Adam(params.parameters() + head.parameters(), lr=cfg.lr)

    train_idx = np.asarray(split.train_idx)
    curve = []
    for epoch in range(epochs):
        order = rng.permutation(len(train_idx))
        total, seen = 0.0, 0
        for batch in _batch_indices(order, cfg.batch_size, min_last=min_batch):
            positions = train_idx[batch]
            graphs = [ds.graphs[i] for i in positions]
            ssl_batch = make_ssl_batch(graphs, augmenter, params, kcfg,
                                       epoch, indices=positions)
            loss = loss_fn(ssl_batch, head)
            _check_finite(loss.item(), "pretraining loss", fold, epoch)
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
            total += loss.item() * len(batch)
            seen += len(batch)
        curve.append(total / seen)
    return params, head, curve


def pretrain_ssl(cfg: TrainConfig, dataset: Dataset = None,
                 epochs: int = None) -> PretrainResult:
    """Label-free encoder pretraining, one encoder per fold.

    Each fold's encoder sees only that fold's train split, so downstream
    adaptation never leaks test graphs into pretraining.
    """
    ds = dataset if dataset is not None else load_dataset(cfg)
    kcfg = cfg.kernel_config()
    folds = stratified_folds(ds, cfg.folds, cfg.seed)
    augmenter = cfg.make_augmenter()
    epochs = cfg.epochs if epochs is None else epochs
    fold_params, fold_heads, curves = [], [], []
    for fold, split in enumerate(folds):
        params, head, curve = _pretrain_fold(ds, split, cfg, kcfg, fold,
                                             augmenter, epochs)
        fold_params.append(params)
        fold_heads.append(head)
        curves.append(curve)
    return PretrainResult(fold_params, fold_heads, curves, cfg.to_dict(), folds)


def adapt(pretrained: PretrainResult, cfg: TrainConfig,
          dataset: Dataset = None) -> RunResult:
    """Evaluate a pretrained encoder: probe trains the classifier only,
    finetune continues training the encoder as well."""
    if pretrained is None or not pretrained.fold_params:
        raise ConfigError("adapt: pretrained parameters are required")
    if cfg.mode not in ("probe", "finetune"):
        raise ConfigError(f"adapt: mode must be 'probe' or 'finetune', got {cfg.mode!r}")
    ds = dataset if dataset is not None else load_dataset(cfg)
    kcfg = cfg.kernel_config()
    folds = stratified_folds(ds, cfg.folds, cfg.seed)
    if len(folds) != len(pretrained.fold_params):
        raise ConfigError("adapt: fold count does not match the pretrained run")
    start = time.perf_counter()
    results = []
    for fold, split in enumerate(folds):
        params = pretrained.fold_params[fold].copy()
        results.append(_run_fold(ds, split, cfg, kcfg, fold, params=params,
                                 train_encoder=(cfg.mode == "finetune")))
    return RunResult.aggregate(results, cfg.to_dict(), cfg.mode,
                               time.perf_counter() - start)


def adapt_best(pretrained: PretrainResult, cfg: TrainConfig,
               dataset: Dataset = None) -> RunResult:
    """Run probe and finetune, report whichever validates better."""
    outcomes = []
    for mode in ("probe", "finetune"):
        mode_cfg = dataclasses.replace(cfg, mode=mode)
        outcomes.append(adapt(pretrained, mode_cfg, dataset))
    return max(outcomes, key=lambda r: float(np.mean(r.val_accuracies)))


# ---------------------------------------------------------------------------
# ablation sweeps
# ---------------------------------------------------------------------------

def ablate(cfg: TrainConfig, parameter: str, values: list,
           dataset: Dataset = None, pretrain_epochs: int = None) -> list:
    """One full run per value with shared folds and seeds.

    A tau sweep exercises the augmentation pipeline (pretrain + adapt);
    a num_hidden sweep honours the configured mode.
    """
    if parameter not in ("tau", "num_hidden"):
        raise ConfigError(f"ablate: unknown parameter {parameter!r}")
    results = []
    for value in values:
        if parameter == "tau":
            if not (TAU_GUIDANCE[0] <= value <= TAU_GUIDANCE[1]):
                warnings.warn(f"tau={value} outside the guidance range "
                              f"[{TAU_GUIDANCE[0]}, {TAU_GUIDANCE[1]}]")
            mode = cfg.mode if cfg.mode in ("probe", "finetune") else "finetune"
            run_cfg = dataclasses.replace(cfg, tau=float(value), augmenter="lga",
                                          mode=mode)
            pre = pretrain_ssl(run_cfg, dataset, epochs=pretrain_epochs)
            results.append(adapt(pre, run_cfg, dataset))
        else:
            run_cfg = dataclasses.replace(cfg, hidden_graphs=int(value))
            if run_cfg.mode in ("probe", "finetune"):
                pre = pretrain_ssl(run_cfg, dataset, epochs=pretrain_epochs)
                results.append(adapt(pre, run_cfg, dataset))
            else:
                run_cfg = dataclasses.replace(run_cfg, mode="supervised")
                results.append(train_supervised(run_cfg, dataset))
    return results
