"""Training losses. Both return the batch mean of the per-example loss."""

from __future__ import annotations

import numpy as np

from .autograd import Node, _node, _result, scale, square, sub, total


def _check_targets(target, n_classes: int) -> np.ndarray:
    target = np.asarray(target)
    if target.ndim != 1 or not np.issubdtype(target.dtype, np.integer):
        raise ValueError("targets must be a 1-d integer array of class indices")
    if target.size and (target.min() < 0 or target.max() >= n_classes):
        raise ValueError(f"class index out of range [0, {n_classes})")
    return target


def one_hot(target, n_classes: int) -> np.ndarray:
    target = _check_targets(target, n_classes)
    out = np.zeros((target.shape[0], n_classes))
    out[np.arange(target.shape[0]), target] = 1.0
    return out


def square_error_loss(pred, target) -> Node:
    """Mean over the batch of ``sum_j (pred_j - onehot_j)**2``."""
    pred = _node(pred)
    B, K = pred.shape
    return scale(total(square(sub(pred, one_hot(target, K)))), 1.0 / B)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_cross_entropy_loss(logits, target) -> Node:
    """Mean of ``-log softmax(logits)[target]``, stable for large logits."""
    logits = _node(logits)
    B, K = logits.shape
    target = _check_targets(target, K)
    logp = log_softmax(logits.value)
    value = -logp[np.arange(B), target].sum() / B

    def rule(g):
        grad = np.exp(logp)
        grad[np.arange(B), target] -= 1.0
        return (grad * (g / B),)

    return _result(np.asarray(value), (logits,), rule)


LOSSES = {
    "square_error": square_error_loss,
    "softmax_cross_entropy": softmax_cross_entropy_loss,
}


def task_loss(name: str, pred, target) -> Node:
    try:
        fn = LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}") from None
    return fn(pred, target)
