"""Random instances of every differentiable operation, for finite-difference checks.

Each case builder takes a generator and returns ``(fn, inputs)`` where
``fn(*nodes)`` builds a graph node from the inputs. Instances are drawn away
from kinks (ties in a max, zeros of relu/abs) so that central differences with
step 1e-5 see a smooth function.
"""

import math

import numpy as np

from rbfinet import autograd as ag
from rbfinet.autograd import TRUE
from rbfinet.layers import RBFILayer, rbfi_forward, scaled_distance, scaled_distance_composed
from rbfinet.losses import softmax_cross_entropy_loss, square_error_loss

MARGIN = 1e-3


def _shape(rng):
    return int(rng.integers(1, 4)), int(rng.integers(1, 5))


def _away_from_zero(rng, shape):
    v = rng.normal(size=shape)
    return np.where(np.abs(v) < MARGIN, MARGIN * 10, v)


def _distinct_rows(rng, shape, axis=-1):
    while True:
        z = rng.normal(size=shape)
        s = np.sort(z, axis=axis)
        top2 = np.take(s, [-1], axis=axis) - np.take(s, [-2], axis=axis) if z.shape[axis] > 1 else np.ones(1)
        if np.all(top2 > MARGIN):
            return z


def _distance_inputs(rng, gamma):
    B, N, M = int(rng.integers(1, 4)), int(rng.integers(1, 6)), int(rng.integers(1, 4))
    while True:
        x, u, w = rng.uniform(0, 1, (B, N)), rng.uniform(0.1, 3, (N, M)), rng.uniform(0, 1, (N, M))
        if gamma != math.inf or N == 1:
            return x, u, w
        z = np.sort((u[None] * (x[:, :, None] - w[None])) ** 2, axis=1)
        if np.all(z[:, -1] - z[:, -2] > MARGIN):
            return x, u, w


def case_add(rng):
    s = _shape(rng)
    return ag.add, [rng.normal(size=s), rng.normal(size=s[1:])]


def case_sub(rng):
    s = _shape(rng)
    return ag.sub, [rng.normal(size=s), rng.normal(size=s)]


def case_mul(rng):
    s = _shape(rng)
    return ag.mul, [rng.normal(size=s), rng.normal(size=s[1:])]


def case_square(rng):
    return ag.square, [rng.normal(size=_shape(rng))]


def case_scale(rng):
    c = float(rng.normal())
    return (lambda a: ag.scale(a, c)), [rng.normal(size=_shape(rng))]


def case_absolute(rng):
    return ag.absolute, [_away_from_zero(rng, _shape(rng))]


def case_maximum(rng):
    s = _shape(rng)
    a = rng.normal(size=s)
    b = a + _away_from_zero(rng, s)
    return ag.maximum, [a, b]


def case_reshape(rng):
    B, N = _shape(rng)
    return (lambda a: ag.reshape(a, (N, B))), [rng.normal(size=(B, N))]


def case_total(rng):
    return ag.total, [rng.normal(size=_shape(rng))]


def case_sum_axis(rng):
    axis = int(rng.integers(0, 2))
    return (lambda a: ag.sum_axis(a, axis)), [rng.normal(size=_shape(rng))]


def case_sqrt(rng):
    return ag.sqrt, [rng.uniform(0.1, 3.0, size=_shape(rng))]


def case_mean(rng):
    return ag.mean, [rng.normal(size=_shape(rng))]


def case_matmul(rng):
    B, N = _shape(rng)
    return ag.matmul, [rng.normal(size=(B, N)), rng.normal(size=(N, int(rng.integers(1, 4))))]


def case_affine(rng):
    B, N = _shape(rng)
    M = int(rng.integers(1, 4))
    return ag.affine, [rng.normal(size=(B, N)), rng.normal(size=(N, M)), rng.normal(size=M)]


def case_relu(rng):
    return ag.relu, [_away_from_zero(rng, _shape(rng))]


def case_sigmoid(rng):
    return ag.sigmoid, [3 * rng.normal(size=_shape(rng))]


def case_exp_neg(rng):
    return (lambda z: ag.exp_neg(z, TRUE)), [rng.uniform(0, 5, size=_shape(rng))]


def case_shared_feedback_max(rng):
    axis = int(rng.integers(0, 2))
    return (lambda z: ag.shared_feedback_max(z, TRUE, axis)), [_distinct_rows(rng, _shape(rng), axis)]


def case_scaled_distance_inf(rng):
    return (lambda x, u, w: scaled_distance(x, u, w, TRUE)), list(_distance_inputs(rng, math.inf))


def case_scaled_distance_two(rng):
    return (lambda x, u, w: scaled_distance(x, u, w, TRUE, 2.0)), list(_distance_inputs(rng, 2.0))


def case_scaled_distance_composed(rng):
    return (lambda x, u, w: scaled_distance_composed(x, u, w, TRUE)), list(_distance_inputs(rng, math.inf))


def case_rbfi_layer(rng):
    x, u, w = _distance_inputs(rng, math.inf)
    kinds = ["and" if k else "or" for k in rng.random(u.shape[1]) < 0.5]

    def fn(xn, un, wn):
        layer = RBFILayer(ag.BoundedParameter(u, 0, 10), ag.BoundedParameter(w, 0, 1), kinds)
        layer.u.node, layer.w.node = un, wn
        return rbfi_forward(layer, xn, TRUE)

    return fn, [x, u, w]


def case_square_error(rng):
    B = int(rng.integers(1, 4))
    y = rng.integers(0, 10, B)
    return (lambda p: square_error_loss(p, y)), [rng.uniform(size=(B, 10))]


def case_cross_entropy(rng):
    B = int(rng.integers(1, 4))
    y = rng.integers(0, 10, B)
    return (lambda z: softmax_cross_entropy_loss(z, y)), [3 * rng.normal(size=(B, 10))]


CASES = {name[5:]: fn for name, fn in list(globals().items()) if name.startswith("case_")}
