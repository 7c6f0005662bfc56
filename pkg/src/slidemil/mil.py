"""Attention-MIL bag classifier trained with Adam and a plateau schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .attention import (
    HEAD_PARAM_NAMES,
    init_head,
    instance_dropout,
    mil_forward,
    mil_loss,
    mil_loss_and_grads,
)
from .extractor import EXTRACTOR_PARAM_NAMES, ExtractorSpec, FINETUNE_PARAM_NAMES, init_extractor
from .optim import AdamOptimizer, PlateauScheduler
from .parallel import single_thread_blas
from .seeds import derive_seed
from .validation import as_rng, check_tile_stack


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    lr_head: float
    lr_extractor: float


def write_epoch_csv(path, history: list["EpochRecord"]) -> None:
    """Per-epoch training log: epoch, losses, accuracy, learning rates."""
    from pathlib import Path

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss,val_acc,lr_head,lr_extractor\n")
        for r in history:
            fh.write(
                f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.val_acc!r},{r.lr_head!r},{r.lr_extractor!r}\n"
            )


def mean_rgb_of_bags(bags) -> np.ndarray:
    """Mean color over every pixel of every tile, rounded to bytes."""
    total = np.zeros(3)
    count = 0
    for tiles in bags:
        arr = np.asarray(tiles, dtype=np.float64)
        total += arr.reshape(-1, 3).sum(axis=0)
        count += arr.shape[0] * arr.shape[1] * arr.shape[2]
    if count == 0:
        return np.array([0, 0, 0], dtype=np.uint8)
    return np.floor(total / count + 0.5).astype(np.uint8)


class MilAttentionClassifier(ClassifierMixin, BaseEstimator):
    """Bag-level classifier: feature extractor + attention pooling + softmax.

    ``fit`` takes a sequence of bags (each a (k_i, s, s, 3) byte array) and one
    label per bag. Training runs one optimization step per bag, applies
    instance dropout in training mode only, reduces learning rates on a
    validation-loss plateau, and returns the checkpoint with the highest
    validation accuracy (earliest epoch on ties).
    """

    def __init__(
        self,
        n_classes: int = 2,
        hidden_dim: int = 32,
        input_size: int = 32,
        channels: tuple[int, int, int] = (8, 16, 32),
        reduce_channels: int = 8,
        feature_dim: int = 64,
        epochs: int = 50,
        warmup_epochs: int = 5,
        lr_head: float = 5e-3,
        lr_extractor: float = 1e-4,
        dropout_rate: float = 0.5,
        plateau_patience: int = 10,
        plateau_factor: float = 0.1,
        adam_beta1: float = 0.9,
        adam_beta2: float = 0.999,
        adam_eps: float = 1e-8,
        seed: int = 0,
    ):
        self.n_classes = n_classes
        self.hidden_dim = hidden_dim
        self.input_size = input_size
        self.channels = channels
        self.reduce_channels = reduce_channels
        self.feature_dim = feature_dim
        self.epochs = epochs
        self.warmup_epochs = warmup_epochs
        self.lr_head = lr_head
        self.lr_extractor = lr_extractor
        self.dropout_rate = dropout_rate
        self.plateau_patience = plateau_patience
        self.plateau_factor = plateau_factor
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps
        self.seed = seed

    @property
    def spec(self) -> ExtractorSpec:
        return ExtractorSpec(
            input_size=self.input_size,
            channels=tuple(self.channels),
            reduce_channels=self.reduce_channels,
            feature_dim=self.feature_dim,
        )

    def _validate_bags(self, X):
        return [check_tile_stack(b) for b in X]

    def fit(self, X, y, validation=None, extractor_init=None):
        """Train on bags ``X`` with labels ``y``.

        ``validation``: optional (bags, labels) pair scored each epoch; when
        omitted the training set doubles as the validation set.
        ``extractor_init``: optional pretrained extractor tensors to start
        from (copied, not mutated).
        """
        bags = self._validate_bags(X)
        labels = np.asarray(y, dtype=np.int64)
        if len(bags) == 0:
            raise ValueError("empty training split")
        if len(bags) != len(labels):
            raise ValueError("X and y must align")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise ValueError("labels must lie in [0, n_classes)")
        if validation is None:
            val_bags, val_labels = bags, labels
        else:
            val_bags = self._validate_bags(validation[0])
            val_labels = np.asarray(validation[1], dtype=np.int64)
            if len(val_bags) == 0:
                raise ValueError("empty validation split")

        spec = self.spec
        if extractor_init is not None:
            params = {k: np.array(extractor_init[k], dtype=np.float64) for k in EXTRACTOR_PARAM_NAMES}
        else:
            params = init_extractor(spec, derive_seed(self.seed, "mil-extractor-init"))
        head_rng = as_rng(derive_seed(self.seed, "mil-head-init"))
        params.update(init_head(head_rng, self.n_classes, self.hidden_dim, self.feature_dim))

        self.mean_rgb_ = mean_rgb_of_bags(bags)
        shuffle_rng = as_rng(derive_seed(self.seed, "mil-shuffle"))
        dropout_rng = as_rng(derive_seed(self.seed, "mil-dropout"))

        head_opt = AdamOptimizer(HEAD_PARAM_NAMES, self.adam_beta1, self.adam_beta2, self.adam_eps)
        ext_opt = AdamOptimizer(FINETUNE_PARAM_NAMES, self.adam_beta1, self.adam_beta2, self.adam_eps)
        scheduler = PlateauScheduler(self.plateau_patience, self.plateau_factor)
        lr_head = float(self.lr_head)
        lr_ext = float(self.lr_extractor)

        history: list[EpochRecord] = []
        best_params = {k: v.copy() for k, v in params.items()}
        # checkpoint choice: highest validation accuracy, ties to lower
        # validation loss, then to the earlier epoch
        best_key = (-1.0, -np.inf)
        with single_thread_blas():
            for epoch in range(1, self.epochs + 1):
                order = shuffle_rng.permutation(len(bags))
                running = 0.0
                # dropout engages after the head-only warm-up; the warm-up's
                # job is to lock the head onto the signal before instances
                # start disappearing
                apply_dropout = self.dropout_rate > 0.0 and epoch > self.warmup_epochs
                for idx in order:
                    tiles = bags[idx]
                    if apply_dropout:
                        tiles, _ = instance_dropout(tiles, self.dropout_rate, self.mean_rgb_, dropout_rng)
                    loss, grads = mil_loss_and_grads(params, spec, tiles, labels[idx])
                    running += loss
                    head_opt.step(params, grads, lr_head)
                    if epoch > self.warmup_epochs:
                        ext_opt.step(params, grads, lr_ext)
                val_loss, val_acc = self._score_split(params, spec, val_bags, val_labels)
                history.append(
                    EpochRecord(epoch, running / len(bags), val_loss, val_acc, lr_head, lr_ext)
                )
                if (val_acc, -val_loss) > best_key:
                    best_key = (val_acc, -val_loss)
                    best_params = {k: v.copy() for k, v in params.items()}
                if scheduler.observe(val_loss):
                    lr_head *= self.plateau_factor
                    lr_ext *= self.plateau_factor

        self.params_ = best_params
        self.history_ = history
        return self

    @staticmethod
    def _score_split(params, spec, bags, labels):
        total = 0.0
        hits = 0
        for tiles, label in zip(bags, labels):
            probs, _, _ = mil_forward(params, spec, tiles)
            total += -float(np.log(max(float(probs[int(label)]), 1e-300)))
            if int(probs.argmax()) == int(label):
                hits += 1
        return total / len(bags), hits / len(bags)

    def forward(self, bag):
        """Evaluation-mode forward: (probabilities, attention, features)."""
        return mil_forward(self.params_, self.spec, bag)

    def predict_proba(self, X) -> np.ndarray:
        return np.array([self.forward(bag)[0] for bag in X])

    def predict(self, X) -> np.ndarray:
        # argmax takes the lowest class index on ties
        return self.predict_proba(X).argmax(axis=1)

    def attention(self, bag) -> np.ndarray:
        """Attention weights over one bag, evaluation mode (no dropout)."""
        return self.forward(bag)[1]

    def export_tensors(self) -> dict[str, np.ndarray]:
        out = dict(self.params_)
        out["mean_rgb"] = self.mean_rgb_.astype(np.float64)
        return out

    def load_tensors(self, tensors: dict[str, np.ndarray]):
        names = EXTRACTOR_PARAM_NAMES + HEAD_PARAM_NAMES
        self.params_ = {k: np.array(tensors[k], dtype=np.float64) for k in names}
        mean = tensors.get("mean_rgb")
        self.mean_rgb_ = (
            np.floor(np.asarray(mean) + 0.5).astype(np.uint8) if mean is not None else np.zeros(3, np.uint8)
        )
        self.history_ = []
        return self
