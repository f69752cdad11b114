"""AdaDelta with projection of bounded parameters back into their range."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autograd import BoundedParameter, Node

RHO = 0.95
EPS = 1e-6


@dataclass
class AdaDeltaState:
    """Running means of squared gradients (``eg2``) and squared updates (``edx2``)."""

    rho: float = RHO
    eps: float = EPS
    eg2: list[np.ndarray] = field(default_factory=list)
    edx2: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[BoundedParameter | Node], rho: float = RHO, eps: float = EPS):
        nodes = [_as_node(p) for p in params]
        return cls(rho, eps, [np.zeros_like(n.value) for n in nodes], [np.zeros_like(n.value) for n in nodes])


def _as_node(p) -> Node:
    return p.node if isinstance(p, BoundedParameter) else p


def adadelta_update(grad: np.ndarray, eg2: np.ndarray, edx2: np.ndarray, rho: float, eps: float) -> np.ndarray:
    """Advance the accumulators in place and return the parameter increment."""
    eg2 *= rho
    eg2 += (1.0 - rho) * grad * grad
    delta = -np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps) * grad
    edx2 *= rho
    edx2 += (1.0 - rho) * delta * delta
    return delta


def adadelta_step(params: Sequence[BoundedParameter | Node], state: AdaDeltaState) -> None:
    """One AdaDelta step on every parameter, then clamp bounded ones and clear gradients."""
    if not state.eg2:
        fresh = AdaDeltaState.for_params(params, state.rho, state.eps)
        state.eg2, state.edx2 = fresh.eg2, fresh.edx2
    if len(state.eg2) != len(params):
        raise ValueError(f"state tracks {len(state.eg2)} parameters, got {len(params)}")
    for p, eg2, edx2 in zip(params, state.eg2, state.edx2):
        node = _as_node(p)
        if node.has_grad():
            node.value += adadelta_update(node.grad, eg2, edx2, state.rho, state.eps)
        else:
            # a zero gradient still decays the squared-gradient average
            eg2 *= state.rho
            edx2 *= state.rho
        if isinstance(p, BoundedParameter):
            p.clamp()
        node.zero_grad()
