"""Epoch loop, validation, early stopping and ``fit``."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..architectures import ArchitectureSpec, ModelInstance
from ..data.dataset import batch_indices, load_batch
from ..data.labels import one_hot
from ..evaluation import accuracy, confusion_from_predictions, macro_average, per_class_metrics
from ..nn import functional as F
from ..nn.tensor import get_dtype
from .checkpoint import Checkpoint
from .optim import Adam
from .schedule import SCHEDULES, lr_at

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss or gradients)."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


@dataclass
class TrainConfig:
    arch: ArchitectureSpec
    lr0: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0
    batch_size: int = 64
    epochs: int = 20
    schedule: str = "halve_per_epoch"
    early_stop_patience: int = 5
    seed: int = 0
    momentum: float | None = None
    plateau_patience: int = 2
    plateau_min_delta: float = 1e-4

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if not all(0.0 <= b < 1.0 for b in self.betas):
            raise ValueError(f"Adam betas must lie in [0, 1), got {self.betas}")
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown lr schedule {self.schedule!r}; expected one of {SCHEDULES}")
        if self.momentum is not None:
            logger.warning("momentum=%s is recorded but ignored: Adam betas govern the update",
                           self.momentum)

    def make_optimizer(self, model: ModelInstance) -> Adam:
        return Adam(model.named_parameters(), self.lr0, self.betas, self.weight_decay)


@dataclass
class EpochStats:
    loss: float
    accuracy: float
    batches: int


@dataclass
class EvalResult:
    confusion: np.ndarray
    loss: float

    @property
    def macro_f1(self) -> float:
        return macro_average(per_class_metrics(self.confusion)[2])

    @property
    def accuracy(self) -> float:
        return accuracy(self.confusion)


@dataclass
class EarlyStopState:
    """Tracks the best validation macro-F1; stop once ``patience`` epochs pass
    without a strict improvement."""

    patience: int
    best: float = -math.inf
    best_epoch: int | None = None
    since_improvement: int = 0

    def update(self, value: float, epoch: int) -> bool:
        if value > self.best:
            self.best, self.best_epoch, self.since_improvement = value, epoch, 0
            return True
        self.since_improvement += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.since_improvement >= self.patience


def _num_classes(model: ModelInstance) -> int:
    return model.spec.num_classes


def train_epoch(model: ModelInstance, dataset, config: TrainConfig, optimizer: Adam,
                epoch: int, lr: float | None = None, on_batch: Callable | None = None) -> EpochStats:
    """One pass over ``dataset`` in a shuffle order seeded by ``(config.seed, epoch)``."""
    n = len(dataset)
    if n == 0:
        raise ValueError("empty training split")
    model.train()
    model.reseed_dropout([config.seed, epoch, 2])
    lr = config.lr0 if lr is None else lr
    total_loss, correct = 0.0, 0
    batches = batch_indices(n, config.batch_size, np.random.default_rng([config.seed, epoch, 1]))
    for b, idx in enumerate(batches):
        x, y = load_batch(dataset, idx, epoch, get_dtype())
        logits = model.forward_logits(x)
        loss, probs, dlogits = F.softmax_cross_entropy(logits, one_hot(y, _num_classes(model), logits.dtype))
        if not math.isfinite(loss):
            model.network.clear_cache()
            raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch {b}", epoch + 1)
        model.zero_grad()
        model.backward(dlogits)
        optimizer.step(lr)
        total_loss += loss * len(idx)
        correct += int((probs.argmax(axis=1) == y).sum())
        if on_batch is not None:
            on_batch(b, loss)
    model.zero_grad()
    return EpochStats(total_loss / n, 100.0 * correct / n, len(batches))


def evaluate(model: ModelInstance, dataset, batch_size: int = 64) -> EvalResult:
    """Eval-mode confusion matrix and mean cross-entropy over ``dataset``."""
    was_training = model.network.training
    model.eval()
    preds, labels, total = [], [], 0.0
    k = _num_classes(model)
    for idx in batch_indices(len(dataset), batch_size):
        x, y = load_batch(dataset, idx, 0, get_dtype())
        logits = model.forward_logits(x)
        model.network.clear_cache()
        loss, probs, _ = F.softmax_cross_entropy(logits, one_hot(y, k, logits.dtype))
        total += loss * len(idx)
        preds.append(probs.argmax(axis=1))
        labels.append(y)
    model.network.train(was_training)
    cm = confusion_from_predictions(np.concatenate(labels), np.concatenate(preds), k)
    return EvalResult(cm, total / max(len(dataset), 1))


@dataclass
class FitResult:
    best: Checkpoint
    last: Checkpoint
    history: list[dict] = field(default_factory=list)
    stopped_early: bool = False


def fit(model: ModelInstance, train_set, val_set, config: TrainConfig,
        normalization: dict | None = None, class_names=None,
        evaluate_fn: Callable[[ModelInstance, int], EvalResult] | None = None,
        on_epoch: Callable[[dict], None] | None = None) -> FitResult:
    """Train for up to ``config.epochs`` epochs with validation-F1 early stopping.

    ``evaluate_fn(model, epoch)`` replaces the validation pass (used to script
    metric traces). History epochs are 1-based.
    """
    optimizer = config.make_optimizer(model)
    early = EarlyStopState(config.early_stop_patience)
    history: list[dict] = []
    val_losses: list[float] = []
    best = None
    stopped = False
    for e in range(config.epochs):
        lr = lr_at(config.schedule, e, config.lr0, val_losses, config.epochs,
                   config.plateau_patience, config.plateau_min_delta)
        stats = train_epoch(model, train_set, config, optimizer, e, lr)
        result = evaluate_fn(model, e + 1) if evaluate_fn else evaluate(model, val_set, config.batch_size)
        val_losses.append(result.loss)
        f1 = result.macro_f1
        record = {"epoch": e + 1, "lr": lr, "train_loss": stats.loss,
                  "train_accuracy": stats.accuracy, "val_loss": result.loss,
                  "val_macro_f1": f1, "val_accuracy": result.accuracy}
        history.append(record)
        metrics = {"val_macro_f1": f1, "val_accuracy": result.accuracy, "val_loss": result.loss}
        if early.update(f1, e + 1):
            best = Checkpoint.from_model(model, e + 1, metrics, normalization, class_names)
        logger.info("epoch %d lr=%.3g train_loss=%.4f val_f1=%.2f", e + 1, lr, stats.loss, f1)
        if on_epoch is not None:
            on_epoch(record)
        if early.should_stop:
            stopped = True
            break
    last = Checkpoint.from_model(model, history[-1]["epoch"], metrics, normalization, class_names,
                                 optimizer)
    return FitResult(best, last, history, stopped)
