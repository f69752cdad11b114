"""Minibatch training loop with optional sensitivity regularization."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .autograd import PSEUDO, _check_mode, add, backward
from .layers import Network
from .losses import LOSSES, task_loss
from .mnist import Dataset, batches
from .optim import EPS, RHO, AdaDeltaState, adadelta_step
from .sensitivity import network_sensitivity_bound, sensitivity_regularizer

log = logging.getLogger(__name__)

ADVERSARIAL_MODES = (None, "fgsm", "ifgsm", "pgd")


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 100
    loss: str | None = None  # None picks the family default
    gradient_mode: str = PSEUDO
    regularizer_c: float = 0.0
    seed: int = 0
    rho: float = RHO
    eps: float = EPS
    # optional adversarial augmentation (intended for ReLU / sigmoid baselines)
    adversarial: str | None = None
    adversarial_eps: float = 0.3
    check_bounds: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.loss is not None and self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.regularizer_c < 0:
            raise ValueError("regularizer_c must be nonnegative")
        if self.adversarial not in ADVERSARIAL_MODES:
            raise ValueError(f"adversarial must be one of {ADVERSARIAL_MODES}")
        _check_mode(self.gradient_mode)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_accuracy: float
    sensitivity_bound: float
    seconds: float = 0.0


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].test_accuracy if self.records else float("nan")


def accuracy(net: Network, data: Dataset, batch_size: int = 1000) -> float:
    if len(data) == 0:
        return float("nan")
    return float(np.mean(net.classify(data.images, batch_size) == data.labels))


def _adversarial_batch(net, x, y, cfg: TrainConfig, seed_index: int):
    from . import attacks

    if cfg.adversarial == "fgsm":
        return attacks.fgsm(net, x, y, cfg.adversarial_eps, cfg.gradient_mode)
    if cfg.adversarial == "ifgsm":
        return attacks.ifgsm(net, x, y, cfg.adversarial_eps, 10, cfg.gradient_mode)
    # one 100-step restart; keep the end point whether or not it is misclassified
    res = attacks.pgd(net, x, y, cfg.adversarial_eps, steps=100, restarts=1, seed=cfg.seed,
                      mode=cfg.gradient_mode, indices=seed_index + np.arange(len(x)))
    return res.adversarial


def train_step(net: Network, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, state: AdaDeltaState) -> float:
    """One optimizer step on a minibatch; returns the task loss of the batch."""
    loss_name = cfg.loss or net.loss
    loss = task_loss(loss_name, net.forward(x, cfg.gradient_mode), y)
    objective = loss
    if cfg.regularizer_c > 0:
        objective = add(loss, sensitivity_regularizer(net, cfg.regularizer_c))
    backward(objective)
    params = net.parameters()
    adadelta_step(params, state)
    if cfg.check_bounds:
        for p in params:
            if hasattr(p, "in_range") and not p.in_range():
                raise AssertionError(f"{p} left its range")
    return float(loss.value)


def train(net: Network, data: Dataset, cfg: TrainConfig, test_data: Dataset | None = None) -> TrainingLog:
    """Train ``net`` in place for ``cfg.epochs`` epochs.

    Each epoch draws a fresh permutation from ``(cfg.seed, epoch)``. Every log
    record pairs the mean task loss of the epoch with end-of-epoch metrics
    (test accuracy is NaN when ``test_data`` is omitted).
    """
    if len(data) == 0:
        raise ValueError("training set is empty")
    state = AdaDeltaState.for_params(net.parameters(), cfg.rho, cfg.eps)
    history = TrainingLog()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        losses = []
        seen = 0
        for x, y in batches(data, cfg.batch_size, cfg.seed, epoch):
            if cfg.adversarial is not None:
                x_adv = _adversarial_batch(net, x, y, cfg, epoch * len(data) + seen)
                x, y = np.concatenate([x, x_adv]), np.concatenate([y, y])
            seen += len(y)
            losses.append(train_step(net, x, y, cfg, state))
        acc = accuracy(net, test_data) if test_data is not None else float("nan")
        bound = network_sensitivity_bound(net).network_bound
        rec = EpochRecord(epoch + 1, float(np.mean(losses)), acc, bound, time.perf_counter() - t0)
        history.records.append(rec)
        log.info("epoch %d loss %.5f acc %.4f bound %.4g (%.1fs)", rec.epoch, rec.train_loss,
                 rec.test_accuracy, rec.sensitivity_bound, rec.seconds)
    return history
