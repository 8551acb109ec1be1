"""Mini-batch SGD loop with minimum-validation-loss restoration."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DivergedLoss, ValidationError
from .nn.optim import sgd_step
from .nn.tensor import Parameter, Tensor


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 1e-2
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ValidationError(f"invalid training config {self}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FitResult:
    log: list[dict]
    selected_epoch: int


def fit(
    params: Sequence[Parameter],
    n_train: int,
    batch_loss: Callable[[np.ndarray], Tensor],
    val_loss: Callable[[], float],
    config: TrainConfig,
) -> FitResult:
    """Train ``params`` and leave them at the epoch with the lowest validation loss.

    ``batch_loss`` maps an index array into the training set to a scalar loss
    tensor. Only the best snapshot is held in memory; ties keep the earlier
    epoch.
    """
    trainable = [p for p in params if not p.frozen]
    best_loss = math.inf
    best_epoch = 0
    best_state = [p.data.copy() for p in trainable]
    log: list[dict] = []
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(n_train)
        total = 0.0
        for start in range(0, n_train, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss = batch_loss(idx)
            value = float(loss.data)
            if not math.isfinite(value):
                raise DivergedLoss(f"non-finite training loss {value} at epoch {epoch}, batch starting {start}")
            loss.backward()
            sgd_step(trainable, config.learning_rate)
            total += value * len(idx)
        vloss = float(val_loss())
        if not math.isfinite(vloss):
            raise DivergedLoss(f"non-finite validation loss {vloss} at epoch {epoch}")
        log.append({"epoch": epoch, "train_loss": total / n_train, "val_loss": vloss})
        if vloss < best_loss:
            best_loss, best_epoch = vloss, epoch
            best_state = [p.data.copy() for p in trainable]
    for p, saved in zip(trainable, best_state):
        p.data[...] = saved
    return FitResult(log=log, selected_epoch=best_epoch)
