"""Closed-form bounds on how far a network output can move under an
infinity-norm input perturbation, per unit of perturbation size.

Bounds are propagated layer by layer starting from ``s = 1`` on every input:

* dense layers: ``s_j = a * sum_i |W_ij| s_i`` with ``a = 1/4`` after a
  sigmoid and ``a = 1`` otherwise;
* infinity-norm RBFI layers: ``s_j = max_i s_i * phi(u_ij)``;
* Euclidean RBF layers: ``s_j = sqrt(2/e) * sqrt(sum_i (u_ij s_i)**2)``.

The network bound is the largest entry of the last vector.

The RBFI weight factor is ``phi(u) = max((2/e) u**2, sqrt(2/e) u)``. The
quadratic term is the customary single-unit estimate; on its own it
underestimates the slope of ``exp(-(u t)**2)`` when ``u < sqrt(e/2)``
(the true worst-case slope is ``sqrt(2/e) u``), so the linear term keeps
the bound valid there. For ``u >= sqrt(e/2)`` the two coincide with the
quadratic expression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autograd import (
    TRUE,
    Node,
    absolute,
    constant,
    matmul,
    maximum,
    mul,
    reshape,
    scale,
    shared_feedback_max,
    sqrt,
    square,
    sum_axis,
)
from .layers import DenseLayer, Network, RBFILayer

TWO_OVER_E = 2.0 / math.e
SQRT_TWO_OVER_E = math.sqrt(2.0 / math.e)
SIGMOID_MAX_SLOPE = 0.25


@dataclass
class SensitivityReport:
    per_layer_bounds: list[np.ndarray]
    network_bound: float


def rbfi_weight_factor(u):
    """``phi(u) = max((2/e) u**2, sqrt(2/e) u)`` on arrays or graph nodes."""
    if isinstance(u, Node):
        return maximum(scale(square(u), TWO_OVER_E), scale(u, SQRT_TWO_OVER_E))
    u = np.asarray(u, dtype=np.float64)
    return np.maximum(TWO_OVER_E * u * u, SQRT_TWO_OVER_E * u)


def unit_sensitivity(kind: str, weights) -> float:
    """Sensitivity bound of a single unit.

    ``relu``: ``||w||_1``; ``sigmoid``: ``||w||_1 / 4``;
    ``rbfi``: ``phi(||u||_inf)``; ``rbf2``: ``sqrt(2/e) ||u||_2``.
    """
    v = np.asarray(weights, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("weight vector must be nonempty")
    if kind == "relu":
        return float(np.abs(v).sum())
    if kind == "sigmoid":
        return SIGMOID_MAX_SLOPE * float(np.abs(v).sum())
    if kind == "rbfi":
        return float(rbfi_weight_factor(np.abs(v).max()))
    if kind == "rbf2":
        return SQRT_TWO_OVER_E * float(np.sqrt((v * v).sum()))
    raise ValueError(f"unknown unit kind {kind!r}")


def _layer_bound(layer, s: Node) -> Node:
    # s has shape (n_in,); returns shape (n_out,)
    if isinstance(layer, DenseLayer):
        out = reshape(matmul(reshape(s, (1, s.shape[0])), absolute(layer.W)), (layer.W.shape[1],))
        return scale(out, SIGMOID_MAX_SLOPE) if layer.activation == "sigmoid" else out
    if isinstance(layer, RBFILayer):
        u = layer.u.node
        col = reshape(s, (s.shape[0], 1))
        if layer.gamma == math.inf:
            return shared_feedback_max(mul(col, rbfi_weight_factor(u)), TRUE, axis=0)
        return scale(sqrt(sum_axis(square(mul(col, u)), 0)), SQRT_TWO_OVER_E)
    raise TypeError(f"unsupported layer {type(layer).__name__}")


def sensitivity_graph(net: Network) -> tuple[Node, list[Node]]:
    """The network bound as a differentiable node, plus the per-layer vectors."""
    s = constant(np.ones(net.spec.input_size))
    layers = []
    for layer in net.layers:
        s = _layer_bound(layer, s)
        layers.append(s)
    return shared_feedback_max(s, TRUE, axis=0), layers


def network_sensitivity_bound(net: Network) -> SensitivityReport:
    bound, layers = sensitivity_graph(net)
    return SensitivityReport([l.value.copy() for l in layers], float(bound.value))


def sensitivity_regularizer(net: Network, c: float) -> Node:
    """``c`` times the network bound, attached to the parameters for backprop."""
    if c < 0:
        raise ValueError("regularization weight must be nonnegative")
    if c == 0:
        return constant(0.0)
    bound, _ = sensitivity_graph(net)
    return scale(bound, c)
