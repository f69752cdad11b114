import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbfinet.autograd import PSEUDO, TRUE, BoundedParameter, backward, parameter, total
from rbfinet.layers import (
    GeometryError,
    RBFILayer,
    UnitKind,
    init_network,
    parse_geometry,
    rbfi_forward,
    scaled_distance,
    scaled_distance_composed,
)

from oracles import rbfi_unit


def _layer(u, w, kinds, gamma=math.inf):
    u, w = np.atleast_2d(u), np.atleast_2d(w)
    return RBFILayer(BoundedParameter(u, 0.0, 1e9), BoundedParameter(w, -1e9, 1e9), kinds, gamma)


def _col(v):
    return np.asarray(v, float).reshape(-1, 1)


def test_rbfi_unit_examples():
    for u in ([0.3, 2.0], [1.0, 0.01]):
        w = [0.2, 0.7]
        x = np.array([w])
        assert rbfi_forward(_layer(_col(u), _col(w), ["and"]), x).value[0, 0] == 1.0
        assert rbfi_forward(_layer(_col(u), _col(w), ["or"]), x).value[0, 0] == 0.0
    out = rbfi_forward(_layer([[1.0]], [[0.0]], ["and"]), np.array([[1.0]])).value
    assert out[0, 0] == pytest.approx(0.367879, abs=1e-6)
    out = rbfi_forward(_layer(_col([1, 1]), _col([0, 0]), ["and"], 2.0), np.array([[1.0, 1.0]])).value
    assert out[0, 0] == pytest.approx(0.135335, abs=1e-6)


def test_rbfi_layer_matches_scalar_oracle(rng):
    n, m = 6, 5
    u, w = rng.uniform(0.01, 3, (n, m)), rng.uniform(0, 1, (n, m))
    kinds = ["and", "or", "and", "or", "or"]
    x = rng.uniform(0, 1, (4, n))
    for gamma in (math.inf, 2.0):
        got = rbfi_forward(_layer(u, w, kinds, gamma), x).value
        for b in range(4):
            for j in range(m):
                ref = rbfi_unit(x[b], u[:, j], w[:, j], gamma)
                assert got[b, j] == pytest.approx(ref if kinds[j] == "and" else 1 - ref, abs=1e-14)


def test_parse_geometry_examples():
    spec = parse_geometry("R(512,512,512,10|and,or,and,or)")
    assert spec.family == "rbfi" and spec.layer_sizes == (512, 512, 512, 10)
    assert spec.layer_kinds == ("and", "or", "and", "or")
    spec = parse_geometry("ReLU(128,128,10)")
    assert spec.family == "relu" and spec.layer_kinds == ("relu", "relu", "none")
    spec = parse_geometry("R(64,64,64,10|mixed,mixed,mixed,or)")
    assert spec.layer_kinds == ("mixed", "mixed", "mixed", "or")
    assert parse_geometry("R(64,10|∧,∨)").layer_kinds == ("and", "or")
    assert parse_geometry("R(64,10|*,^)").layer_kinds == ("mixed", "and")
    assert parse_geometry("Sigmoid(32,10)").layer_kinds == ("sigmoid", "sigmoid")
    assert parse_geometry("R2(16,10|and,or)").gamma == 2.0


@pytest.mark.parametrize("code", [
    "R(64,64,64,10|and,or,and,or)", "R(8,10|mixed,or)", "R2(16,10|and,or)", "ReLU(64,10)", "Sigmoid(10)",
])
def test_geometry_round_trip(code):
    assert parse_geometry(parse_geometry(code).geometry).geometry == code


@pytest.mark.parametrize("code, position", [
    ("Q(10)", 0),
    ("R(64,10)", 7),
    ("R(64,10|and,xor)", 12),
    ("ReLU(64,,10)", 8),
    ("R(64,10|and,or", 14),
    ("ReLU(64,10) extra", 12),
    ("ReLU(64,10%)", 10),
    ("R(64,10|and)", 7),
])
def test_parse_errors_carry_position(code, position):
    with pytest.raises(GeometryError) as info:
        parse_geometry(code)
    assert info.value.position == position


def test_last_layer_must_match_classes():
    with pytest.raises(ValueError):
        parse_geometry("ReLU(64,9)")
    assert parse_geometry("ReLU(4,3)", n_classes=3).n_classes == 3


def test_init_determinism_and_ranges():
    spec = parse_geometry("R(100,100,10|mixed,and,or)")
    a, b = init_network(spec, 7), init_network(spec, 7)
    for x, y in zip(a.parameter_arrays(), b.parameter_arrays()):
        assert np.array_equal(x, y)
    assert [l.kinds for l in a.layers] == [l.kinds for l in b.layers]
    c = init_network(spec, 8)
    assert not np.array_equal(a.parameter_arrays()[0], c.parameter_arrays()[0])
    first = a.layers[0]
    # 78,400 draws of each
    assert first.w.value.min() >= 0 and first.w.value.max() <= 1
    assert first.u.value.min() >= 0.01 and first.u.value.max() <= 1.0
    assert first.u.value.max() > 0.99 and first.u.value.min() < 0.02
    n_or = sum(k is UnitKind.OR for k in first.kinds)
    assert 25 <= n_or <= 75
    assert first.u.hi == 3.0 and first.u.lo == 0.01


def test_init_u_cap_respects_small_u_max():
    net = init_network(parse_geometry("R(50,10|and,or)", u_max=0.5), 0)
    assert net.layers[0].u.value.max() <= 0.5


def test_dense_init_rule():
    net = init_network(parse_geometry("ReLU(200,10)"), 3)
    W, b = net.layers[0].W.value, net.layers[0].b.value
    a = math.sqrt(6 / (784 + 200))
    assert np.abs(W).max() <= a and np.abs(W).max() > 0.99 * a
    assert np.all(b == 0)


@pytest.mark.parametrize("code", ["R(16,12,10|and,or,or)", "R(16,10|mixed,mixed)", "R2(16,10|and,or)"])
def test_rbfi_outputs_in_unit_interval(code, rng):
    net = init_network(parse_geometry(code), 1)
    out = net.predict(rng.uniform(0, 1, (50, 784)))
    assert out.min() >= 0 and out.max() <= 1


def test_permutation_invariance(rng):
    net = init_network(parse_geometry("R(16,10|and,or)"), 2)
    x = rng.uniform(0, 1, (5, 784))
    perm = rng.permutation(784)
    ref = net.predict(x)
    net.layers[0].u.node.value[:] = net.layers[0].u.value[perm]
    net.layers[0].w.node.value[:] = net.layers[0].w.value[perm]
    assert np.array_equal(net.predict(x[:, perm]), ref)


@pytest.mark.parametrize("code", ["R(16,10|mixed,or)", "ReLU(16,10)", "Sigmoid(16,10)"])
def test_batch_independence(code, rng):
    net = init_network(parse_geometry(code), 4)
    x = rng.uniform(0, 1, (1, 784))
    one = net.forward(x).value
    two = net.forward(np.vstack([x, x])).value
    assert np.array_equal(two[0], one[0]) and np.array_equal(two[1], one[0])


def test_forward_identical_across_modes(rng):
    net = init_network(parse_geometry("R(16,16,10|mixed,and,or)"), 5)
    x = rng.uniform(0, 1, (8, 784))
    assert np.array_equal(net.forward(x, PSEUDO).value, net.forward(x, TRUE).value)


@pytest.mark.parametrize("mode", [PSEUDO, TRUE])
@pytest.mark.parametrize("gamma", [math.inf, 2.0])
def test_fused_distance_matches_composed(mode, gamma, rng):
    x0, u0, w0 = rng.uniform(0, 1, (7, 13)), rng.uniform(0.01, 3, (13, 5)), rng.uniform(0, 1, (13, 5))
    g = rng.normal(size=(7, 5))
    results = []
    for fn in (scaled_distance, scaled_distance_composed):
        x, u, w = parameter(x0), parameter(u0), parameter(w0)
        out = fn(x, u, w, mode, gamma)
        backward(total(out * g))
        results.append((out.value, x.grad, u.grad, w.grad))
    for a, b in zip(*results):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-13)


def test_and_output_monotone_in_argmax_deviation():
    u, w = _col([2.0, 1.0]), _col([0.5, 0.5])
    layer = _layer(u, w, ["and"])
    devs = np.linspace(0.0, 0.5, 30)
    outs = [rbfi_forward(layer, np.array([[0.5 + d, 0.5]])).value[0, 0] for d in devs]
    assert all(a >= b for a, b in zip(outs, outs[1:]))
    assert outs[0] == 1.0 and outs[-1] > 0


def test_tiny_u_ignores_input(rng):
    n = 20
    layer = _layer(np.full((n, 1), 0.01), rng.uniform(0, 1, (n, 1)), ["and"])
    w = layer.w.value[:, 0]
    x = np.clip(w + rng.uniform(-1, 1, (200, n)), w - 1, w + 1)
    out = rbfi_forward(layer, x).value
    assert np.ptp(out) < 1e-4 and out.min() > 1 - 1e-4


def test_true_gradient_is_local(rng):
    n = 12
    u, w = rng.uniform(0.1, 3, (n, 3)), rng.uniform(0, 1, (n, 3))
    layer = _layer(u, w, ["and", "or", "and"])
    for _ in range(20):
        x = parameter(rng.uniform(0, 1, (1, n)))
        # summed over three units: at most one coordinate per unit
        backward(total(rbfi_forward(layer, x, TRUE)))
        assert np.count_nonzero(x.grad) <= 3
    # per-unit check, including a tie
    x = parameter(np.array([[0.5, 0.5]]))
    tie = _layer(_col([1.0, 1.0]), _col([0.0, 0.0]), ["and"])
    backward(total(rbfi_forward(tie, x, TRUE)))
    assert x.grad[0, 1] == 0.0 and x.grad[0, 0] != 0.0


def test_layer_shape_checks():
    from rbfinet.autograd import DimensionError
    with pytest.raises(DimensionError):
        _layer(np.ones((3, 2)), np.ones((3, 3)), ["and", "and"])
    with pytest.raises(DimensionError):
        _layer(np.ones((3, 2)), np.ones((3, 2)), ["and"])
    layer = _layer(np.ones((3, 2)), np.ones((3, 2)), ["and", "or"])
    with pytest.raises(DimensionError):
        rbfi_forward(layer, np.ones((1, 4)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_unit_output_ranges(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 10))
    u, w = rng.uniform(0.01, 3, (n, 2)), rng.uniform(0, 1, (n, 2))
    out = rbfi_forward(_layer(u, w, ["and", "or"]), rng.uniform(0, 1, (16, n))).value
    assert np.all(out[:, 0] > 0) and np.all(out[:, 0] <= 1)
    assert np.all(out[:, 1] >= 0) and np.all(out[:, 1] < 1)
