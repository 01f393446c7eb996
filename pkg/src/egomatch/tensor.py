"""Minimal reverse-mode autodiff over float64 numpy arrays.

Just enough operators to build, train, and gradient-check small
convolutional embedding networks on a CPU: conv2d, maxpool2d, linear,
relu, concat, squared L2 distance, and elementwise arithmetic.

All ops accept either a single sample (e.g. conv2d on [C,H,W]) or a
leading batch axis ([N,C,H,W]); batching exists purely for speed and
does not change per-sample semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """Node in the computation graph.

    Holds a float64 value, an accumulated gradient of the same shape,
    and the backward closure that routes the gradient to its parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in self._parents)

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def param(data) -> Tensor:
    """Trainable leaf."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def const(data) -> Tensor:
    """Non-trainable leaf."""
    return Tensor(np.array(data, dtype=np.float64))


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
        if t.grad.shape != t.data.shape:
            t.grad = np.broadcast_to(t.grad, t.data.shape).copy()
    else:
        t.grad += g


def _acc_own(t: Tensor, g: np.ndarray) -> None:
    """Like _acc but takes ownership of a freshly allocated g (no copy)."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# elementwise / reduction ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, (a, b))
    out._backward = lambda g: (_acc(a, g), _acc(b, g))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: shapes {a.shape} vs {b.shape}")
    out = Tensor(a.data - b.data, (a, b))
    out._backward = lambda g: (_acc(a, g), _acc(b, -g))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; either operand may be a scalar tensor."""
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"mul: shapes {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data, (a, b))

    def back(g):
        ga = g * b.data
        gb = g * a.data
        if a.shape == () and out.shape != ():
            ga = ga.sum()
        if b.shape == () and out.shape != ():
            gb = gb.sum()
        _acc(a, np.asarray(ga))
        _acc(b, np.asarray(gb))

    out._backward = back
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c, (a,))
    out._backward = lambda g: _acc(a, g * c)
    return out


def relu(x: Tensor) -> Tensor:
    """max(0, x); subgradient at 0 is 0."""
    mask = x.data > 0.0
    out = Tensor(np.where(mask, x.data, 0.0), (x,))
    out._backward = lambda g: _acc_own(x, g * mask)
    return out


def sqrt(x: Tensor) -> Tensor:
    """Elementwise square root; subgradient at 0 defined as 0."""
    val = np.sqrt(np.maximum(x.data, 0.0))
    out = Tensor(val, (x,))

    def back(g):
        d = np.where(val > 0.0, 0.5 / np.where(val > 0.0, val, 1.0), 0.0)
        _acc(x, g * d)

    out._backward = back
    return out


def ssum(x: Tensor, axis=None) -> Tensor:
    out = Tensor(x.data.sum(axis=axis), (x,))

    def back(g):
        if axis is None:
            _acc(x, np.broadcast_to(g, x.shape).copy() if np.ndim(g) else np.full(x.shape, g))
        else:
            _acc(x, np.broadcast_to(np.expand_dims(g, axis), x.shape).copy())

    out._backward = back
    return out


def l2_sq(a: Tensor, b: Tensor) -> Tensor:
    """Squared Euclidean distance sum_i (a_i - b_i)^2, a scalar."""
    if a.shape != b.shape:
        raise ShapeError(f"l2_sq: shapes {a.shape} vs {b.shape}")
    diff = a.data - b.data
    out = Tensor(np.dot(diff.ravel(), diff.ravel()), (a, b))

    def back(g):
        _acc_own(a, 2.0 * g * diff)
        _acc_own(b, -2.0 * g * diff)

    out._backward = back
    return out


def row(x: Tensor, i: int) -> Tensor:
    """Select row i of a 2-d tensor as a 1-d view (for per-sample losses)."""
    out = Tensor(x.data[i], (x,))

    def back(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[i] += g

    out._backward = back
    return out


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last axis (1-d vectors, or batched rows)."""
    if a.data.ndim != b.data.ndim or a.data.ndim not in (1, 2):
        raise ShapeError(f"concat: ranks {a.data.ndim} vs {b.data.ndim}")
    if a.data.ndim == 2 and a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat: batch sizes {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[-1]
    out = Tensor(np.concatenate([a.data, b.data], axis=-1), (a, b))

    def back(g):
        _acc(a, g[..., :n])
        _acc(b, g[..., n:])

    out._backward = back
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape), (x,))
    out._backward = lambda g: _acc(x, g.reshape(x.data.shape))
    return out


# ---------------------------------------------------------------------------
# layers


def linear(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """W @ x + b for a vector x, or x @ W.T + b for batched rows."""
    n = x.shape[-1]
    if W.data.ndim != 2 or W.shape[1] != n or b.shape != (W.shape[0],):
        raise ShapeError(
            f"linear: input {x.shape} incompatible with weight {W.shape}, bias {b.shape}"
        )
    batched = x.data.ndim == 2
    out_val = x.data @ W.data.T + b.data
    out = Tensor(out_val, (x, W, b))

    def back(g):
        _acc_own(x, g @ W.data)
        if batched:
            _acc_own(W, g.T @ x.data)
            _acc_own(b, g.sum(axis=0))
        else:
            _acc_own(W, np.outer(g, x.data))
            _acc(b, g)

    out._backward = back
    return out


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int):
    # xp: [N, C, Hp, Wp] already padded -> col [N, C*kh*kw, Ho*Wo]
    n, c = xp.shape[:2]
    col = np.empty((n, c, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            col[:, :, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return col.reshape(n, c * kh * kw, ho * wo)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation (no kernel flip) with zero padding.

    x: [C,H,W] or [N,C,H,W]; kernel: [Co,Ci,kh,kw]; bias: [Co].
    Output spatial size: floor((H + 2*pad - kh)/stride) + 1.
    """
    if stride < 1:
        raise ShapeError(f"conv2d: stride must be >= 1, got {stride}")
    single = x.data.ndim == 3
    xv = x.data[None] if single else x.data
    if xv.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d: input rank {x.data.ndim}, kernel rank {kernel.data.ndim}")
    n, c, h, w = xv.shape
    co, ci, kh, kw = kernel.shape
    if ci != c:
        raise ShapeError(
            f"conv2d: kernel expects {ci} input channels but input has {c} "
            f"(input {x.shape}, kernel {kernel.shape})"
        )
    if bias.shape != (co,):
        raise ShapeError(f"conv2d: bias {bias.shape} vs {co} output channels")
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}")

    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if pad:
        xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
        xp[:, :, pad:-pad, pad:-pad] = xv
    else:
        xp = xv
    col = _im2col(xp, kh, kw, stride, ho, wo)  # [N, CKK, P]
    wm = kernel.data.reshape(co, ci * kh * kw)
    out_val = np.matmul(wm, col)  # [N, Co, P]
    out_val += bias.data[:, None]
    out_val = out_val.reshape(n, co, ho, wo)
    out = Tensor(out_val[0] if single else out_val, (x, kernel, bias))

    def back(g):
        gv = (g[None] if single else g).reshape(n, co, ho * wo)
        _acc_own(bias, gv.sum(axis=(0, 2)))
        dwm = np.matmul(gv, col.transpose(0, 2, 1)).sum(axis=0)  # [Co, CKK]
        _acc_own(kernel, dwm.reshape(kernel.shape))
        if x.requires_grad:
            dcol = np.matmul(wm.T, gv)  # [N, CKK, P]
            d6 = dcol.reshape(n, c, kh, kw, ho, wo)
            hp, wp = h + 2 * pad, w + 2 * pad
            dxp = np.zeros((n, c, hp, wp))
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += d6[:, :, i, j]
            dx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
            # dx may be a view into the local dxp; safe to hand over
            _acc_own(x, dx[0] if single else dx)

    out._backward = back
    return out


def maxpool2d(x: Tensor, window: int, stride: int) -> Tensor:
    """Per-window max; gradient goes to the first (row-major) argmax."""
    if window < 1 or stride < 1:
        raise ShapeError(f"maxpool2d: window {window} / stride {stride} must be >= 1")
    single = x.data.ndim == 3
    xv = x.data[None] if single else x.data
    n, c, h, w = xv.shape
    if window > h or window > w:
        raise ShapeError(f"maxpool2d: window {window} exceeds input {h}x{w}")
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    stack = np.empty((window * window, n, c, ho, wo))
    for i in range(window):
        for j in range(window):
            stack[i * window + j] = xv[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    arg = stack.argmax(axis=0)  # first occurrence on ties, row-major in the window
    out_val = stack.max(axis=0)
    out = Tensor(out_val[0] if single else out_val, (x,))

    def back(g):
        if not x.requires_grad:
            return
        gv = g[None] if single else g
        hi = (np.arange(ho) * stride)[:, None] + arg // window
        wi = (np.arange(wo) * stride)[None, :] + arg % window
        base = (np.arange(n * c) * (h * w)).reshape(n, c, 1, 1)
        idx = (base + hi * w + wi).ravel()
        dflat = np.zeros(n * c * h * w)
        if stride >= window:
            # windows disjoint: no index collisions, plain scatter
            dflat[idx] = gv.ravel()
        else:
            np.add.at(dflat, idx, gv.ravel())
        dx = dflat.reshape(n, c, h, w)
        _acc_own(x, dx[0] if single else dx)

    out._backward = back
    return out


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Reverse-accumulate d(loss)/d(leaf) for every reachable leaf.

    The root must be scalar. Each node's backward closure runs exactly
    once, in reverse topological order; shared parameters accumulate
    contributions from every branch that uses them.
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward: root must be scalar, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.array(1.0)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# verification and optimization


def grad_check(f, params, eps: float = 1e-6) -> float:
    """Compare analytic gradients of a scalar function against central
    finite differences, coordinate by coordinate.

    f takes the parameter tensors and returns a scalar Tensor. Returns
    the max over coordinates of |analytic - numeric| / max(1e-12,
    |analytic| + |numeric|).
    """
    if eps <= 0:
        raise ValueError("grad_check: eps must be positive")
    zero_grads(params)
    out = f(*params)
    backward(out)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.ravel()
        an_flat = an.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(*params).data)
            flat[i] = orig - eps
            lo = float(f(*params).data)
            flat[i] = orig
            num = (hi - lo) / (2.0 * eps)
            err = abs(an_flat[i] - num) / max(1e-12, abs(an_flat[i]) + abs(num))
            worst = max(worst, err)
    zero_grads(params)
    return worst


@dataclass
class OptimState:
    """Per-parameter SGD-with-momentum state."""

    velocity: np.ndarray
    lr: float = 1e-5
    momentum: float = 0.9
    weight_decay: float = 0.0005

    @classmethod
    def for_param(cls, p: Tensor, lr: float, momentum: float, weight_decay: float) -> "OptimState":
        return cls(np.zeros_like(p.data), lr, momentum, weight_decay)


def sgd_step(p: Tensor, grad: np.ndarray, state: OptimState) -> None:
    """v <- mu*v + lr*(grad + wd*param); param <- param - v (in place)."""
    if grad.shape != p.data.shape:
        raise ShapeError(f"sgd_step: grad {grad.shape} vs param {p.data.shape}")
    state.velocity *= state.momentum
    state.velocity += state.lr * (grad + state.weight_decay * p.data)
    p.data -= state.velocity
