"""RBFI and dense layers plus the geometry strings that describe networks.

A geometry string names the family, the layer widths and, for RBFI networks,
the unit kind of every layer::

    R(512,512,512,10|and,or,and,or)     infinity-norm RBFI units
    R(64,64,64,10|mixed,mixed,mixed,or) "*" / "mixed" draws And/Or per unit
    R2(64,10|and,or)                    Euclidean (gamma = 2) RBF units
    ReLU(128,128,10)                    ReLU hidden layers, linear output
    Sigmoid(128,128,10)                 sigmoid on every layer
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .autograd import (
    PSEUDO,
    BoundedParameter,
    DimensionError,
    Node,
    _check_mode,
    _node,
    _result,
    activation,
    add,
    affine,
    constant,
    exp_neg,
    mul,
    parameter,
    reshape,
    shared_feedback_max,
    square,
    sub,
    sum_axis,
)

INPUT_SIZE = 784
N_CLASSES = 10

U_MIN = 0.01
U_MAX = 3.0
W_MIN = 0.0
W_MAX = 1.0
# upper end of the u initialisation range
U_INIT_CAP = 1.0


class UnitKind(enum.Enum):
    AND = "and"
    OR = "or"


class GeometryError(ValueError):
    """Malformed geometry string; ``position`` is the offending character offset."""

    def __init__(self, message: str, text: str, position: int):
        super().__init__(f"{message} at position {position}: {text!r}")
        self.text = text
        self.position = position


_KIND_ALIASES = {
    "and": "and", "∧": "and", "^": "and",
    "or": "or", "∨": "or", "v": "or",
    "mixed": "mixed", "*": "mixed",
}
_FAMILY_ALIASES = {"r": ("rbfi", math.inf), "rbfi": ("rbfi", math.inf), "r2": ("rbfi", 2.0),
                   "relu": ("relu", None), "sigmoid": ("sigmoid", None)}


@dataclass(frozen=True)
class NetworkSpec:
    """Geometry plus parameter bounds; enough to rebuild a network from a seed."""

    family: str
    layer_sizes: tuple[int, ...]
    layer_kinds: tuple[str, ...]
    u_max: float = U_MAX
    seed: int = 0
    gamma: float = math.inf
    input_size: int = INPUT_SIZE
    n_classes: int = N_CLASSES
    u_min: float = U_MIN
    w_min: float = W_MIN
    w_max: float = W_MAX

    def __post_init__(self):
        if self.family not in ("rbfi", "relu", "sigmoid"):
            raise ValueError(f"unknown family {self.family!r}")
        if not self.layer_sizes or any(k < 1 for k in self.layer_sizes):
            raise ValueError(f"layer sizes must be positive: {self.layer_sizes}")
        if len(self.layer_kinds) != len(self.layer_sizes):
            raise ValueError("one kind code per layer is required")
        if self.layer_sizes[-1] != self.n_classes:
            raise ValueError(f"last layer has {self.layer_sizes[-1]} units, expected {self.n_classes}")
        if self.family == "rbfi":
            if any(k not in ("and", "or", "mixed") for k in self.layer_kinds):
                raise ValueError(f"bad RBFI kinds {self.layer_kinds}")
            if self.gamma not in (2.0, math.inf):
                raise ValueError("gamma must be 2 or infinity")
            if not 0.0 < self.u_min <= self.u_max:
                raise ValueError("need 0 < u_min <= u_max")

    @property
    def geometry(self) -> str:
        """Canonical geometry string (round-trips through :func:`parse_geometry`)."""
        sizes = ",".join(str(k) for k in self.layer_sizes)
        if self.family == "rbfi":
            head = "R" if self.gamma == math.inf else "R2"
            return f"{head}({sizes}|{','.join(self.layer_kinds)})"
        return f"{'ReLU' if self.family == 'relu' else 'Sigmoid'}({sizes})"

    @property
    def loss(self) -> str:
        return "softmax_cross_entropy" if self.family == "relu" else "square_error"

    def with_(self, **changes) -> "NetworkSpec":
        return replace(self, **changes)


_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z][A-Za-z0-9]*)|(∧|∨|\*|\^)|([(),|]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise GeometryError("unexpected character", text, start)
        num, word, sym, punct = m.groups()
        start = m.start(m.lastindex)
        if num is not None:
            tokens.append(("int", num, start))
        elif word is not None:
            tokens.append(("word", word, start))
        elif sym is not None:
            tokens.append(("word", sym, start))
        else:
            tokens.append((punct, punct, start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def parse_geometry(code: str, **overrides) -> NetworkSpec:
    """Parse ``R(sizes|kinds)``, ``R2(sizes|kinds)``, ``ReLU(sizes)`` or ``Sigmoid(sizes)``.

    Extra keyword arguments (``u_max``, ``seed``, ``input_size``...) are
    forwarded to :class:`NetworkSpec`.
    """
    tokens = _tokenize(code)
    k = 0

    def expect(kind: str, what: str):
        nonlocal k
        tok = tokens[k]
        if tok[0] != kind:
            raise GeometryError(f"expected {what}", code, tok[2])
        k += 1
        return tok

    fam_tok = expect("word", "network family")
    try:
        family, gamma = _FAMILY_ALIASES[fam_tok[1].lower()]
    except KeyError:
        raise GeometryError(f"unknown family {fam_tok[1]!r}", code, fam_tok[2]) from None
    expect("(", "'('")
    sizes = [int(expect("int", "layer size")[1])]
    while tokens[k][0] == ",":
        k += 1
        sizes.append(int(expect("int", "layer size")[1]))
    kinds: list[str] = []
    if family == "rbfi":
        bar = expect("|", "'|' before unit kinds")
        while True:
            tok = expect("word", "unit kind")
            kind = _KIND_ALIASES.get(tok[1].lower())
            if kind is None:
                raise GeometryError(f"unknown unit kind {tok[1]!r}", code, tok[2])
            kinds.append(kind)
            if tokens[k][0] != ",":
                break
            k += 1
        if len(kinds) != len(sizes):
            raise GeometryError(f"{len(sizes)} sizes but {len(kinds)} kinds", code, bar[2])
    else:
        kinds = ["relu"] * (len(sizes) - 1) + ["none"] if family == "relu" else ["sigmoid"] * len(sizes)
    expect(")", "')'")
    expect("end", "end of string")
    if any(s < 1 for s in sizes):
        raise GeometryError("layer sizes must be positive", code, fam_tok[2])
    fields = dict(family=family, layer_sizes=tuple(sizes), layer_kinds=tuple(kinds))
    if gamma is not None:
        fields["gamma"] = gamma
    fields.update(overrides)
    return NetworkSpec(**fields)


# ---------------------------------------------------------------------------
# layers


@dataclass
class RBFILayer:
    u: BoundedParameter
    w: BoundedParameter
    kinds: list[UnitKind]
    gamma: float = math.inf

    def __post_init__(self):
        if self.u.shape != self.w.shape or len(self.u.shape) != 2:
            raise DimensionError(f"u {self.u.shape} and w {self.w.shape} must be equal 2-d shapes")
        if len(self.kinds) != self.u.shape[1]:
            raise DimensionError(f"{len(self.kinds)} kinds for {self.u.shape[1]} units")
        self.kinds = [UnitKind(k) for k in self.kinds]

    @property
    def n_in(self) -> int:
        return self.u.shape[0]

    @property
    def n_out(self) -> int:
        return self.u.shape[1]

    def or_mask(self) -> np.ndarray:
        return np.array([k is UnitKind.OR for k in self.kinds], dtype=np.float64)

    def parameters(self) -> list[BoundedParameter]:
        return [self.u, self.w]


@dataclass
class DenseLayer:
    W: Node
    b: Node
    activation: str = "relu"

    def __post_init__(self):
        if self.W.value.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise DimensionError(f"W {self.W.shape} and b {self.b.shape} do not conform")

    def parameters(self) -> list[Node]:
        return [self.W, self.b]


def scaled_distance(x, u, w, mode: str = PSEUDO, gamma: float = math.inf) -> Node:
    """``max_i (u_ij (x_bi - w_ij))**2`` (or the sum for gamma=2), shape (B, M).

    One graph node whose backward streams over the (B, N, M) terms instead of
    storing them. For gamma=infinity the backward applies the same
    shared-feedback rule as :func:`shared_feedback_max`.
    """
    _check_mode(mode)
    x, u, w = _node(x), _node(u), _node(w)
    if x.value.ndim != 2 or x.shape[1] != u.shape[0] or u.shape != w.shape:
        raise DimensionError(f"x {x.shape}, u {u.shape}, w {w.shape} do not conform")
    xv = np.ascontiguousarray(x.value)
    uv = np.ascontiguousarray(u.value)
    wv = np.ascontiguousarray(w.value)
    if gamma == math.inf:
        y, arg = _kernels.sqdist_max(xv, uv, wv)
    else:
        y = _kernels.sqdist_sum(xv, uv, wv)
        arg = None

    def rule(g):
        g = np.ascontiguousarray(g)
        if gamma != math.inf:
            gx, gu, gw = _kernels.backward_sum(xv, uv, wv, g, x.requires_grad)
        elif mode == PSEUDO:
            gx, gu, gw = _kernels.backward_shared_feedback(xv, uv, wv, y, g, x.requires_grad)
        else:
            gx, gu, gw = _kernels.backward_argmax(xv, uv, wv, arg, g)
        return (gx if x.requires_grad else None, gu if u.requires_grad else None,
                gw if w.requires_grad else None)

    return _result(y, (x, u, w), rule)


def scaled_distance_composed(x, u, w, mode: str = PSEUDO, gamma: float = math.inf) -> Node:
    """Reference construction of :func:`scaled_distance` from generic graph ops."""
    x = _node(x)
    B, N = x.shape
    diff = sub(reshape(x, (B, N, 1)), w)
    z = square(mul(u, diff))
    if gamma == math.inf:
        return shared_feedback_max(z, mode, axis=1)
    return sum_axis(z, 1)


def rbfi_forward(layer: RBFILayer, x, mode: str = PSEUDO, fused: bool = True) -> Node:
    """Outputs of an RBFI layer: ``exp(-dist)`` for And units, ``1 - exp(-dist)`` for Or units."""
    dist_fn = scaled_distance if fused else scaled_distance_composed
    dist = dist_fn(x, layer.u.node, layer.w.node, mode, layer.gamma)
    a = exp_neg(dist, mode)
    is_or = layer.or_mask()
    if not is_or.any():
        return a
    if is_or.all():
        return sub(1.0, a)
    return add(mul(a, constant(1.0 - 2.0 * is_or)), constant(is_or))


def dense_forward(layer: DenseLayer, x) -> Node:
    return activation(layer.activation, affine(x, layer.W, layer.b))


class Network:
    """A stack of layers built from a :class:`NetworkSpec`."""

    def __init__(self, spec: NetworkSpec, layers: Sequence[RBFILayer | DenseLayer]):
        self.spec = spec
        self.layers = list(layers)

    @property
    def family(self) -> str:
        return self.spec.family

    @property
    def loss(self) -> str:
        return self.spec.loss

    def forward(self, x, mode: str = PSEUDO, fused: bool = True) -> Node:
        return network_forward(self, x, mode, fused)

    def predict(self, x: np.ndarray, batch_size: int = 1000) -> np.ndarray:
        """Forward values only, in fixed-size batches."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        out = [network_forward(self, x[i:i + batch_size]).value for i in range(0, len(x), batch_size)]
        res = np.concatenate(out) if out else np.zeros((0, self.spec.layer_sizes[-1]))
        return res[0] if single else res

    def classify(self, x: np.ndarray, batch_size: int = 1000) -> np.ndarray:
        return np.argmax(self.predict(x, batch_size), axis=-1)

    def parameters(self) -> list[BoundedParameter | Node]:
        return [p for layer in self.layers for p in layer.parameters()]

    def nodes(self) -> list[Node]:
        return [p.node if isinstance(p, BoundedParameter) else p for p in self.parameters()]

    def zero_grad(self) -> None:
        for n in self.nodes():
            n.zero_grad()

    def parameter_arrays(self) -> list[np.ndarray]:
        return [n.value for n in self.nodes()]

    def __repr__(self) -> str:
        return f"Network({self.spec.geometry})"


def network_forward(net: Network, x, mode: str = PSEUDO, fused: bool = True) -> Node:
    """Compose the layers; ReLU networks return raw logits."""
    h = _node(x)
    for layer in net.layers:
        if isinstance(layer, RBFILayer):
            h = rbfi_forward(layer, h, mode, fused)
        else:
            h = dense_forward(layer, h)
    return h


def init_network(spec: NetworkSpec, rng_seed: int | None = None) -> Network:
    """Draw initial parameters from a single seeded stream.

    RBFI layers take ``w ~ U[w_min, w_max]``, ``u ~ U[u_min, min(1, u_max)]``
    and, for mixed layers, a fair coin per unit for And/Or. Dense layers use
    ``U[-sqrt(6/(n_in+n_out)), +sqrt(6/(n_in+n_out))]`` weights and zero bias.
    """
    seed = spec.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    layers: list[RBFILayer | DenseLayer] = []
    n_in = spec.input_size
    for n_out, kind in zip(spec.layer_sizes, spec.layer_kinds):
        if spec.family == "rbfi":
            u = rng.uniform(spec.u_min, min(U_INIT_CAP, spec.u_max), size=(n_in, n_out))
            w = rng.uniform(spec.w_min, spec.w_max, size=(n_in, n_out))
            if kind == "mixed":
                kinds = [UnitKind.OR if c else UnitKind.AND for c in rng.random(n_out) < 0.5]
            else:
                kinds = [UnitKind(kind)] * n_out
            layers.append(RBFILayer(
                BoundedParameter(u, spec.u_min, spec.u_max, name="u"),
                BoundedParameter(w, spec.w_min, spec.w_max, name="w"),
                kinds, spec.gamma))
        else:
            a = math.sqrt(6.0 / (n_in + n_out))
            W = rng.uniform(-a, a, size=(n_in, n_out))
            layers.append(DenseLayer(parameter(W, "W"), parameter(np.zeros(n_out), "b"), kind))
        n_in = n_out
    return Network(spec, layers)
