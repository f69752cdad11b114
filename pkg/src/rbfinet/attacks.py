"""FGSM, I-FGSM, PGD with random restarts, uniform-noise perturbation, and
accuracy under attack.

Every generator works on a batch ``x`` of shape (B, n) (a single vector is
accepted too) and returns inputs inside ``[0, 1]`` and within ``eps`` of the
source in infinity norm. The loss being ascended is the network's training
loss, differentiated in ``mode`` ("pseudo" or "true"); for ReLU and sigmoid
networks the two modes coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autograd import PSEUDO, _check_mode, backward, parameter, scale
from .layers import Network
from .losses import task_loss
from .mnist import Dataset
from .optim import EPS, RHO, adadelta_update

ATTACK_KINDS = ("fgsm", "ifgsm", "pgd", "noise")

# absolute slack for floating-point rounding in the validity check
VALIDITY_TOL = 1e-12

_observers: list[Callable[[str, np.ndarray, np.ndarray, float], None]] = []


def add_observer(fn: Callable[[str, np.ndarray, np.ndarray, float], None]) -> None:
    """Register ``fn(kind, x, x_adv, eps)``, called on every emitted batch."""
    _observers.append(fn)


def remove_observer(fn) -> None:
    _observers.remove(fn)


def _emit(kind: str, x: np.ndarray, x_adv: np.ndarray, eps: float) -> np.ndarray:
    for fn in _observers:
        fn(kind, x, x_adv, eps)
    return x_adv


def perturbation_violations(x: np.ndarray, x_adv: np.ndarray, eps: float, tol: float = VALIDITY_TOL) -> int:
    """Number of rows leaving ``[0, 1]`` or the ``eps`` infinity ball around ``x``."""
    x = np.atleast_2d(x)
    x_adv = np.atleast_2d(x_adv)
    bad = (np.abs(x_adv - x) > eps + tol) | (x_adv < 0.0) | (x_adv > 1.0) | ~np.isfinite(x_adv)
    return int(bad.any(axis=1).sum())


def _batch(x, y):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if y.shape[0] != x.shape[0]:
        raise ValueError(f"{x.shape[0]} inputs but {y.shape[0]} labels")
    return x, y, single


def input_gradient(net: Network, x: np.ndarray, y: np.ndarray, mode: str = PSEUDO) -> tuple[np.ndarray, np.ndarray]:
    """Per-example gradient of the training loss with respect to the input.

    Returns ``(grad, outputs)``; the gradient of row ``b`` depends only on
    ``x[b]`` because the summed (not averaged) loss is differentiated.
    """
    _check_mode(mode)
    xn = parameter(x)
    out = net.forward(xn, mode)
    loss = scale(task_loss(net.loss, out, y), x.shape[0])
    backward(loss)
    net.zero_grad()
    return xn.grad, out.value


def _sign_step(net, x, y, step, mode):
    grad, _ = input_gradient(net, x, y, mode)
    return np.clip(x + step * np.sign(grad), 0.0, 1.0)


def fgsm(net: Network, x, y, eps: float, mode: str = PSEUDO) -> np.ndarray:
    """``clamp(x + eps * sign(grad_x J), 0, 1)`` with ``sign(0) = 0``."""
    x, y, single = _batch(x, y)
    adv = _emit("fgsm", x, _sign_step(net, x, y, eps, mode), eps)
    return adv[0] if single else adv


def ifgsm(net: Network, x, y, eps: float, steps: int = 10, mode: str = PSEUDO) -> np.ndarray:
    """``steps`` clamped sign steps of size ``eps / steps``."""
    if steps < 1:
        raise ValueError("I-FGSM needs at least one step")
    x, y, single = _batch(x, y)
    cur = x
    for _ in range(steps):
        cur = _sign_step(net, cur, y, eps / steps, mode)
    adv = _emit("ifgsm", x, cur, eps)
    return adv[0] if single else adv


def noise_perturb(x, eps: float, seed: int | np.random.Generator = 0) -> np.ndarray:
    """``(1 - eps) x + eps * eta`` with ``eta`` uniform on ``[0, 1]^n``."""
    x = np.asarray(x, dtype=np.float64)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    eta = rng.random(x.shape)
    out = (1.0 - eps) * x + eps * eta
    _emit("noise", np.atleast_2d(x), np.atleast_2d(out), eps)
    return out


def example_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for one test example, independent of evaluation order."""
    return np.random.default_rng([int(seed), int(index)])


@dataclass
class PGDResult:
    success: np.ndarray      # (B,) bool
    adversarial: np.ndarray  # (B, n); misclassified point where success, last iterate otherwise
    restarts_used: np.ndarray  # (B,) int


def pgd(net: Network, x, y, eps: float, steps: int = 100, restarts: int = 20, seed: int = 0,
        mode: str = PSEUDO, indices=None) -> PGDResult:
    """Projected gradient ascent of the loss in ``B_eps(x) ∩ [0,1]^n``.

    Each restart starts from a uniform point of the feasible box and takes
    ``steps`` AdaDelta steps on the negative loss, projecting after each one.
    An example counts as broken as soon as any visited point is misclassified;
    an input that is misclassified to begin with is broken with ``x`` itself.
    ``indices`` (default ``0..B-1``) seed the per-example generators.
    """
    if steps < 1 or restarts < 1:
        raise ValueError("steps and restarts must be at least 1")
    x, y, _ = _batch(x, y)
    B = x.shape[0]
    indices = np.arange(B) if indices is None else np.asarray(indices)
    rngs = [example_rng(seed, i) for i in indices]
    lo = np.maximum(0.0, x - eps)
    hi = np.minimum(1.0, x + eps)

    success = net.classify(x) != y
    adversarial = x.copy()
    restarts_used = np.zeros(B, dtype=np.int64)
    for _ in range(restarts):
        rows = np.flatnonzero(~success)
        if rows.size == 0:
            break
        restarts_used[rows] += 1
        cur = np.stack([rngs[b].uniform(lo[b], hi[b]) for b in rows])
        eg2 = np.zeros_like(cur)
        edx2 = np.zeros_like(cur)
        live = np.arange(rows.size)
        for step in range(steps + 1):
            grad, out = input_gradient(net, cur[live], y[rows[live]], mode)
            broken = np.argmax(out, axis=1) != y[rows[live]]
            if broken.any():
                hit = live[broken]
                success[rows[hit]] = True
                adversarial[rows[hit]] = cur[hit]
                keep = ~broken
                live, grad = live[keep], grad[keep]
            if live.size == 0 or step == steps:
                break
            eg2_rows, edx2_rows = eg2[live], edx2[live]
            delta = adadelta_update(-grad, eg2_rows, edx2_rows, RHO, EPS)
            eg2[live], edx2[live] = eg2_rows, edx2_rows
            cur[live] = np.clip(cur[live] + delta, lo[rows[live]], hi[rows[live]])
        failed = np.flatnonzero(~success[rows])
        adversarial[rows[failed]] = cur[failed]
    _emit("pgd", x, adversarial, eps)
    return PGDResult(success, adversarial, restarts_used)


@dataclass
class AttackConfig:
    kind: str
    epsilon: float
    ifgsm_steps: int = 10
    pgd_steps: int = 100
    pgd_restarts: int = 20
    seed: int = 0
    gradient_mode: str = PSEUDO

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack {self.kind!r}, expected one of {ATTACK_KINDS}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if min(self.ifgsm_steps, self.pgd_steps, self.pgd_restarts) < 1:
            raise ValueError("step and restart counts must be at least 1")
        _check_mode(self.gradient_mode)

    @property
    def descriptor(self) -> str:
        if self.kind == "ifgsm":
            return f"ifgsm[{self.ifgsm_steps}]"
        if self.kind == "pgd":
            return f"pgd[{self.pgd_steps}x{self.pgd_restarts}]"
        return self.kind


@dataclass
class AttackResult:
    clean_accuracy: float
    attacked_accuracy: float
    per_example_success: np.ndarray = field(repr=False)
    mean_linf_perturbation: float
    n_examples: int


def perturb(net: Network, x: np.ndarray, y: np.ndarray, cfg: AttackConfig, indices: np.ndarray):
    """Attacked inputs and a success mask for one batch of test examples."""
    if cfg.kind == "fgsm":
        adv = fgsm(net, x, y, cfg.epsilon, cfg.gradient_mode)
    elif cfg.kind == "ifgsm":
        adv = ifgsm(net, x, y, cfg.epsilon, cfg.ifgsm_steps, cfg.gradient_mode)
    elif cfg.kind == "noise":
        adv = np.stack([noise_perturb(row, cfg.epsilon, example_rng(cfg.seed, i)) for row, i in zip(x, indices)])
    else:
        res = pgd(net, x, y, cfg.epsilon, cfg.pgd_steps, cfg.pgd_restarts, cfg.seed,
                  cfg.gradient_mode, indices)
        return res.adversarial, res.success
    return adv, net.classify(adv) != y


def evaluate_under_attack(net: Network, data: Dataset, cfg: AttackConfig, limit: int | None = None,
                          batch_size: int = 500) -> AttackResult:
    """Clean and attacked accuracy over the first ``limit`` examples of ``data``."""
    data = data.subset(limit)
    n = len(data)
    clean_ok = net.classify(data.images) == data.labels
    success = np.zeros(n, dtype=bool)
    linf = np.zeros(n)
    for start in range(0, n, batch_size):
        sl = slice(start, min(n, start + batch_size))
        x, y = data.images[sl], data.labels[sl]
        adv, broken = perturb(net, x, y, cfg, np.arange(sl.start, sl.stop))
        success[sl] = broken
        linf[sl] = np.abs(adv - x).max(axis=1) if x.size else 0.0
    return AttackResult(
        clean_accuracy=float(clean_ok.mean()) if n else float("nan"),
        attacked_accuracy=float((~success).mean()) if n else float("nan"),
        per_example_success=success,
        mean_linf_perturbation=float(linf.mean()) if n else 0.0,
        n_examples=n,
    )
