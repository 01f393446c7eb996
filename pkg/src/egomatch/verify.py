"""Finite-difference verification suite for the autodiff core.

Every differentiable op and both loss functions are checked on many
random instances against central differences. Random values are drawn
with guaranteed spacing where an op has kinks or ties (relu, sqrt,
maxpool) so the numeric derivative is well defined at every probe.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .losses import PairExemplar, TripletExemplar, contrastive_loss, triplet_loss
from .tensor import Tensor, grad_check


def _spaced(rng, shape, lo=-1.0, hi=1.0, min_abs=0.0):
    """Values with pairwise gaps >> gradcheck eps, optionally away from 0.

    A random global offset keeps the set asymmetric, so sums and other
    aggregates do not cancel to numerically tiny gradients.
    """
    n = int(np.prod(shape))
    step = (hi - lo) / max(n, 1)
    vals = np.linspace(lo, hi, n, endpoint=False) + rng.uniform(0.07, 0.93) * step
    vals = rng.permutation(vals)
    if min_abs > 0.0:
        vals = np.where(np.abs(vals) < min_abs,
                        vals + np.where(vals < 0.0, -min_abs, min_abs), vals)
    return vals.reshape(shape)


def _param(rng, shape, **kw):
    return T.param(_spaced(rng, shape, **kw))


def _check_add(rng):
    a, b = _param(rng, (7,)), _param(rng, (7,))
    return grad_check(lambda x, y: T.ssum(T.mul(T.add(x, y), y)), [a, b])


def _check_sub(rng):
    a, b = _param(rng, (7,)), _param(rng, (7,))
    return grad_check(lambda x, y: T.ssum(T.mul(T.sub(x, y), x)), [a, b])


def _check_mul(rng):
    a, b = _param(rng, (6,)), _param(rng, (6,))
    return grad_check(lambda x, y: T.ssum(T.mul(x, y)), [a, b])


def _check_mul_scalar(rng):
    a = _param(rng, ())
    b = _param(rng, (5,))
    return grad_check(lambda x, y: T.ssum(T.mul(x, T.mul(y, y))), [a, b])


def _check_scale(rng):
    a = _param(rng, (8,))
    c = float(rng.uniform(0.5, 2.0))
    return grad_check(lambda x: T.ssum(T.mul(T.scale(x, c), x)), [a])


def _check_relu(rng):
    a = _param(rng, (9,), min_abs=0.05)
    return grad_check(lambda x: T.ssum(T.mul(T.relu(x), x)), [a])


def _check_sqrt(rng):
    a = _param(rng, (6,), lo=0.2, hi=2.0)
    return grad_check(lambda x: T.ssum(T.sqrt(x)), [a])


def _check_ssum(rng):
    a = _param(rng, (3, 4))
    return grad_check(lambda x: T.mul(T.ssum(x), T.ssum(x)), [a])


def _check_l2_sq(rng):
    a, b = _param(rng, (8,)), _param(rng, (8,))
    return grad_check(lambda x, y: T.l2_sq(x, y), [a, b])


def _check_row(rng):
    a = _param(rng, (4, 5))
    i = int(rng.integers(4))
    return grad_check(lambda x: T.ssum(T.mul(T.row(x, i), T.row(x, i))), [a])


def _check_concat(rng):
    a, b = _param(rng, (4,)), _param(rng, (3,))
    return grad_check(lambda x, y: T.ssum(T.mul(T.concat(x, y), T.concat(x, y))),
                      [a, b])


def _check_reshape(rng):
    a = _param(rng, (2, 6))
    return grad_check(lambda x: T.ssum(T.mul(T.reshape(x, (12,)),
                                             T.reshape(x, (12,)))), [a])


def _check_linear(rng):
    x = _param(rng, (5,))
    w = _param(rng, (3, 5))
    b = _param(rng, (3,))
    return grad_check(lambda xx, ww, bb: T.ssum(T.mul(T.linear(xx, ww, bb),
                                                      T.linear(xx, ww, bb))),
                      [x, w, b])


def _check_linear_batched(rng):
    x = _param(rng, (2, 4))
    w = _param(rng, (3, 4))
    b = _param(rng, (3,))
    return grad_check(lambda xx, ww, bb: T.ssum(T.mul(T.linear(xx, ww, bb),
                                                      T.linear(xx, ww, bb))),
                      [x, w, b])


def _check_conv2d(rng):
    x = _param(rng, (1, 2, 5, 5))
    w = _param(rng, (2, 2, 3, 3))
    b = _param(rng, (2,))
    stride = int(rng.integers(1, 3))
    def f(xx, ww, bb):
        out = T.conv2d(xx, ww, bb, stride, 1)
        return T.ssum(T.mul(out, out))
    return grad_check(f, [x, w, b])


def _check_maxpool2d(rng):
    x = _param(rng, (1, 2, 4, 4))
    def f(xx):
        out = T.maxpool2d(xx, 2, 2)
        return T.ssum(T.mul(out, out))
    return grad_check(f, [x])


def _check_contrastive(rng):
    d = 5
    batch = []
    for i in range(3):
        batch.append(PairExemplar(_param(rng, (d,)), _param(rng, (d,)),
                                  int(rng.integers(2))))
    params = [t for ex in batch for t in (ex.x_e, ex.x_p)]
    m = float(rng.uniform(0.5, 1.5))
    def f(*_):
        return contrastive_loss(batch, m)
    return grad_check(f, params)


def _check_triplet(rng):
    d = 5
    batch = []
    for i in range(2):
        batch.append(TripletExemplar(_param(rng, (d,)), _param(rng, (d,)),
                                     _param(rng, (d,))))
    params = [t for ex in batch for t in (ex.x_e, ex.x_1, ex.x_0)]
    m = float(rng.uniform(0.5, 1.5))
    def f(*_):
        return triplet_loss(batch, m)
    return grad_check(f, params)


CHECKS = [
    ("add", _check_add),
    ("sub", _check_sub),
    ("mul", _check_mul),
    ("mul_scalar", _check_mul_scalar),
    ("scale", _check_scale),
    ("relu", _check_relu),
    ("sqrt", _check_sqrt),
    ("ssum", _check_ssum),
    ("l2_sq", _check_l2_sq),
    ("row", _check_row),
    ("concat", _check_concat),
    ("reshape", _check_reshape),
    ("linear", _check_linear),
    ("linear_batched", _check_linear_batched),
    ("conv2d", _check_conv2d),
    ("maxpool2d", _check_maxpool2d),
    ("contrastive", _check_contrastive),
    ("triplet", _check_triplet),
]


def run_gradcheck_suite(instances: int = 100, seed: int = 0):
    """Returns (overall max rel err, [(check name, max rel err), ...])."""
    table = []
    worst = 0.0
    for i, (name, fn) in enumerate(CHECKS):
        err = 0.0
        for j in range(instances):
            rng = np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(i, j)))
            err = max(err, fn(rng))
        table.append((name, err))
        worst = max(worst, err)
    return worst, table
