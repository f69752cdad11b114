"""Dense float64 tensors and a small define-by-run reverse-mode graph.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. A :class:`Node`
wraps one of them together with the recipe that maps the gradient flowing into
the node onto its parents. Operations take nodes (or raw arrays, which are
promoted to constants) and return new nodes; the graph is rebuilt on every
forward pass.

Two operations come in a ``pseudo`` and a ``true`` flavour: :func:`exp_neg`
and :func:`shared_feedback_max`. Their forward values are identical in both
modes; only the backward rule changes.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ._kernels import rowwise_matmul

PSEUDO = "pseudo"
TRUE = "true"
MODES = (PSEUDO, TRUE)

# Exponents of the pseudoderivatives, deliberately not configurable.
EXP_PSEUDO_ALPHA = 0.5
MAX_FEEDBACK_BETA = 1.0


class DimensionError(ValueError):
    """Raised when operand shapes do not conform."""


def as_tensor(data) -> np.ndarray:
    """Return ``data`` as a float64 array (no copy when already one)."""
    return np.asarray(data, dtype=np.float64)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown gradient mode {mode!r}, expected one of {MODES}")


class Node:
    """A tensor in the differentiation graph.

    ``backward_rule`` receives the gradient of the root with respect to this
    node and returns one gradient (or ``None``) per parent.
    """

    __slots__ = ("value", "parents", "backward_rule", "requires_grad", "name", "_grad")

    def __init__(
        self,
        value,
        parents: Sequence["Node"] = (),
        backward_rule: Callable | None = None,
        requires_grad: bool = False,
        name: str | None = None,
    ):
        self.value = as_tensor(value)
        self.parents = tuple(parents)
        self.backward_rule = backward_rule
        self.requires_grad = requires_grad
        self.name = name
        self._grad = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        value = as_tensor(value)
        if value.shape != self.value.shape:
            raise DimensionError(f"grad shape {value.shape} != value shape {self.value.shape}")
        self._grad = value

    def zero_grad(self) -> None:
        self._grad = None

    def has_grad(self) -> bool:
        return self._grad is not None

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Node{label} shape={self.value.shape} requires_grad={self.requires_grad}>"

    # operator sugar for graph construction
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)


def parameter(data, name: str | None = None) -> Node:
    """Create a trainable leaf node holding a private float64 copy of ``data``."""
    return Node(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def constant(data) -> Node:
    return Node(data, requires_grad=False)


def _node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _result(value: np.ndarray, parents: Sequence[Node], rule: Callable) -> Node:
    if any(p.requires_grad for p in parents):
        return Node(value, parents, rule, requires_grad=True)
    return Node(value)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: np.ndarray, b: np.ndarray) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"shapes {a.shape} and {b.shape} are not broadcast-compatible") from exc


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Node:
    a, b = _node(a), _node(b)
    _broadcast_shape(a.value, b.value)

    def rule(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _result(a.value + b.value, (a, b), rule)


def sub(a, b) -> Node:
    a, b = _node(a), _node(b)
    _broadcast_shape(a.value, b.value)

    def rule(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _result(a.value - b.value, (a, b), rule)


def mul(a, b) -> Node:
    a, b = _node(a), _node(b)
    _broadcast_shape(a.value, b.value)

    def rule(g):
        ga = unbroadcast(g * b.value, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.value, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(a.value * b.value, (a, b), rule)


def square(a) -> Node:
    a = _node(a)

    def rule(g):
        return (2.0 * a.value * g,)

    return _result(a.value * a.value, (a,), rule)


def scale(a, factor: float) -> Node:
    a = _node(a)
    factor = float(factor)

    def rule(g):
        return (factor * g,)

    return _result(factor * a.value, (a,), rule)


def absolute(a) -> Node:
    """Elementwise ``|a|``; the subgradient at 0 is 0."""
    a = _node(a)

    def rule(g):
        return (np.sign(a.value) * g,)

    return _result(np.abs(a.value), (a,), rule)


def maximum(a, b) -> Node:
    """Elementwise maximum; on ties the gradient goes to ``a``."""
    a, b = _node(a), _node(b)
    _broadcast_shape(a.value, b.value)
    take_a = a.value >= b.value

    def rule(g):
        return unbroadcast(np.where(take_a, g, 0.0), a.shape), unbroadcast(np.where(take_a, 0.0, g), b.shape)

    return _result(np.where(take_a, a.value, b.value), (a, b), rule)


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "square": square, "scale": scale}


def elementwise(op: str, *args) -> Node:
    """Dispatch by name to one of ``add``, ``sub``, ``mul``, ``square``, ``scale``."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# ---------------------------------------------------------------------------
# shape and reductions


def reshape(a, shape: Sequence[int]) -> Node:
    a = _node(a)
    try:
        value = a.value.reshape(shape)
    except ValueError as exc:
        raise DimensionError(str(exc)) from exc

    def rule(g):
        return (g.reshape(a.shape),)

    return _result(value, (a,), rule)


def total(a) -> Node:
    """Sum of all entries, as a 0-d node."""
    a = _node(a)

    def rule(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.asarray(a.value.sum()), (a,), rule)


def sum_axis(a, axis: int) -> Node:
    a = _node(a)

    def rule(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _result(a.value.sum(axis=axis), (a,), rule)


def sqrt(a) -> Node:
    """Elementwise square root; the gradient at 0 is taken as 0."""
    a = _node(a)
    r = np.sqrt(a.value)
    safe = np.where(r > 0, r, 1.0)

    def rule(g):
        return (np.where(r > 0, g / (2.0 * safe), 0.0),)

    return _result(r, (a,), rule)


def mean(a) -> Node:
    a = _node(a)
    return scale(total(a), 1.0 / a.value.size)


def matmul(a, b) -> Node:
    a, b = _node(a), _node(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")

    def rule(g):
        ga = g @ b.value.T if a.requires_grad else None
        gb = a.value.T @ g if b.requires_grad else None
        return ga, gb

    return _result(a.value @ b.value, (a, b), rule)


def affine(x, W, b) -> Node:
    """``x @ W + b`` for ``x`` of shape (B, N), ``W`` (N, M) and ``b`` (M,)."""
    x, W, b = _node(x), _node(W), _node(b)
    if x.value.ndim != 2 or W.value.ndim != 2 or b.value.ndim != 1:
        raise DimensionError(f"affine expects 2-d x, 2-d W, 1-d b; got {x.shape}, {W.shape}, {b.shape}")
    if x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise DimensionError(f"affine shapes do not conform: x {x.shape}, W {W.shape}, b {b.shape}")

    def rule(g):
        gx = rowwise_matmul(np.ascontiguousarray(g), np.ascontiguousarray(W.value.T)) if x.requires_grad else None
        gW = x.value.T @ g if W.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return gx, gW, gb

    # row-wise kernel: a row's output does not depend on the rest of the batch
    out = rowwise_matmul(np.ascontiguousarray(x.value), np.ascontiguousarray(W.value)) + b.value
    return _result(out, (x, W, b), rule)


# ---------------------------------------------------------------------------
# activations


def relu(x) -> Node:
    x = _node(x)
    active = x.value > 0.0

    def rule(g):
        return (np.where(active, g, 0.0),)

    return _result(np.where(active, x.value, 0.0), (x,), rule)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # split by sign so neither branch overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x) -> Node:
    x = _node(x)
    s = _sigmoid(x.value)

    def rule(g):
        return (g * s * (1.0 - s),)

    return _result(s, (x,), rule)


def activation(kind: str, x) -> Node:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "none":
        return _node(x)
    raise ValueError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# the two operations with substitutable derivatives


def exp_pseudo_factor(z: np.ndarray) -> np.ndarray:
    """Pseudoderivative of ``exp(-z)``: ``-(1 + z) ** -1/2``."""
    return -1.0 / np.sqrt(1.0 + z)


def exp_neg(z, mode: str = PSEUDO) -> Node:
    """``exp(-z)``; the backward factor is ``-1/sqrt(1+z)`` in pseudo mode."""
    _check_mode(mode)
    z = _node(z)
    if not np.all(np.isfinite(z.value)):
        raise ValueError("exp_neg received non-finite input")
    out = np.exp(-z.value)

    if mode == PSEUDO:
        def rule(g):
            return (g * exp_pseudo_factor(z.value),)
    else:
        def rule(g):
            return (-g * out,)

    return _result(out, (z,), rule)


def max_feedback_weights(z: np.ndarray, y: np.ndarray, axis: int) -> np.ndarray:
    """Shared-feedback weights ``exp(z_i - y)`` with ``y`` the max along ``axis``."""
    return np.exp(z - np.expand_dims(y, axis))


def one_hot_argmax(z: np.ndarray, axis: int) -> np.ndarray:
    """Indicator of the first maximal entry along ``axis``."""
    idx = np.expand_dims(np.argmax(z, axis=axis), axis)
    mask = np.zeros_like(z)
    np.put_along_axis(mask, idx, 1.0, axis=axis)
    return mask


def shared_feedback_max(z, mode: str = PSEUDO, axis: int = -1) -> Node:
    """Maximum along ``axis``.

    In pseudo mode every input receives ``g * exp(z_i - y)``; in true mode the
    whole gradient goes to the first maximal input.
    """
    _check_mode(mode)
    z = _node(z)
    if z.value.ndim == 0 or z.value.shape[axis] == 0:
        raise DimensionError(f"cannot take the max of an empty axis (shape {z.shape})")
    y = z.value.max(axis=axis)

    def rule(g):
        g = np.expand_dims(g, axis)
        if mode == PSEUDO:
            return (g * max_feedback_weights(z.value, y, axis),)
        return (g * one_hot_argmax(z.value, axis),)

    return _result(y, (z,), rule)


# ---------------------------------------------------------------------------
# traversal


def _topological_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Node) -> None:
    """Accumulate d(root)/d(node) into ``node.grad`` for every reachable node.

    ``root`` must hold a single value of shape ``()`` or ``(1,)``. Gradients
    add onto whatever is already stored, so call :func:`zero_grad` between
    independent passes.
    """
    if root.value.size != 1 or root.value.ndim > 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = _topological_order(root)
    pending: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.has_grad():
            node._grad += g
        else:
            node._grad = np.array(g, dtype=np.float64)
        if node.backward_rule is None:
            continue
        for parent, pg in zip(node.parents, node.backward_rule(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + pg
            else:
                pending[key] = pg


def zero_grad(nodes: Iterable[Node]) -> None:
    for n in nodes:
        n.zero_grad()


def grad_of(fn: Callable[..., Node], *inputs) -> list[np.ndarray]:
    """Gradients of scalar ``fn(*nodes)`` with respect to each input array."""
    nodes = [parameter(x) for x in inputs]
    backward(fn(*nodes))
    return [n.grad for n in nodes]


class BoundedParameter:
    """A trainable node whose entries are kept in ``[lo, hi]``."""

    def __init__(self, data, lo: float, hi: float, name: str | None = None):
        lo, hi = float(lo), float(hi)
        if not lo <= hi:
            raise ValueError(f"empty range [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi
        self.node = parameter(np.clip(as_tensor(data), lo, hi), name=name)

    @property
    def value(self) -> np.ndarray:
        return self.node.value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.node.shape

    def clamp(self) -> None:
        np.clip(self.node.value, self.lo, self.hi, out=self.node.value)

    def in_range(self) -> bool:
        v = self.node.value
        return bool(np.all(v >= self.lo) and np.all(v <= self.hi))

    def __repr__(self) -> str:
        return f"BoundedParameter(shape={self.shape}, lo={self.lo}, hi={self.hi})"
