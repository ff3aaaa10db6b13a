"""Minimal reverse-mode autodiff over float64 numpy buffers.

The graph is an explicit tape: every op produces a Tensor holding a backward
closure and references to its parents. backward() walks the tape in reverse
topological order (iteratively; recurrent graphs are thousands of nodes deep).
Only what the two baseline models need is implemented; broadcasting is limited
to numpy-style elementwise add/mul.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import BadRate, ShapeMismatch
from ..rng import SeededRng

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape construction (inference, validation loss)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A float64 array plus optional gradient buffer and tape linkage."""

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __getitem__(self, key):
        return getitem(self, key)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self, grad=None):
        """Accumulate gradients of this tensor w.r.t. every reachable leaf."""
        if grad is None:
            if self.size != 1:
                raise ShapeMismatch("backward() without explicit grad needs a scalar output")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.data.shape:
                raise ShapeMismatch(f"seed grad shape {grad.shape} != tensor shape {self.data.shape}")

        order = _topo_order(self)
        _accumulate(self, grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _topo_order(root: Tensor) -> list:
    """Iterative post-order DFS; recursion would overflow on long recurrences."""
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over axes that were broadcast to reach `grad.shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# --- elementwise / structural ops -------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def getitem(a: Tensor, key) -> Tensor:
    data = a.data[key]

    def backward(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            buf[key] += g
            _accumulate(a, buf)

    return _make(data, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(a.shape))

    return _make(data, (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, bounds, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                _accumulate(t, piece)

    return _make(data, tuple(tensors), backward)


def tsum(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum())

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.broadcast_to(g, a.shape).astype(np.float64))

    return _make(data, (a,), backward)


def tmean(a: Tensor) -> Tensor:
    n = a.size
    data = np.asarray(a.data.mean())

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.broadcast_to(g / n, a.shape).astype(np.float64))

    return _make(data, (a,), backward)


# --- linear algebra -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _make(data, (a, b), backward)


# --- activations ----------------------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # Overflow-safe split form.
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * data * (1.0 - data))

    return _make(data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * (1.0 - data * data))

    return _make(data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * (a.data > 0.0))

    return _make(data, (a,), backward)


# --- regularization ---------------------------------------------------------------


def dropout(x: Tensor, rate: float, rng: SeededRng | None, training: bool) -> Tensor:
    """Inverted dropout. Inference (training=False) is a strict identity:
    the input tensor is returned unchanged and no randomness is drawn."""
    if not 0.0 <= rate < 1.0:
        raise BadRate(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.shape) >= rate) / keep
    data = x.data * mask

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * mask)

    return _make(data, (x,), backward)


# --- convolution ---------------------------------------------------------------------


def dilated_causal_conv1d(x: Tensor, kernels: Tensor, dilation: int) -> Tensor:
    """Causal 1-D convolution with left zero padding.

    y[c, t] = sum_{i,j} kernels[c, i, j] * x[i, t - (K-1-j)*d], so tap j=K-1
    reads the current timestep and the output never looks ahead. Accepts
    x of shape [C_in, T] or batched [B, C_in, T].
    """
    if kernels.ndim != 3:
        raise ShapeMismatch(f"kernels must be [C_out, C_in, K], got {kernels.shape}")
    if dilation < 1:
        raise ShapeMismatch(f"dilation must be >= 1, got {dilation}")
    squeeze = x.ndim == 2
    xd = x.data[None, :, :] if squeeze else x.data
    if xd.ndim != 3 or xd.shape[1] != kernels.shape[1]:
        raise ShapeMismatch(f"input {x.shape} incompatible with kernels {kernels.shape}")

    c_out, c_in, k = kernels.shape
    t_len = xd.shape[2]
    shifted = []
    for j in range(k):
        s = (k - 1 - j) * dilation
        if s == 0:
            shifted.append(xd)
            continue
        xs = np.zeros_like(xd)
        if s < t_len:
            xs[:, :, s:] = xd[:, :, : t_len - s]
        shifted.append(xs)

    # Contract in [C_out, B, T] layout (tensordot hits BLAS), transpose once.
    acc = np.zeros((c_out, xd.shape[0], t_len))
    for j in range(k):
        acc += np.tensordot(kernels.data[:, :, j], shifted[j], axes=([1], [1]))
    data = np.ascontiguousarray(np.moveaxis(acc, 0, 1))
    if squeeze:
        data = data[0]

    def backward(g):
        gb = g[None, :, :] if squeeze else g
        if kernels.requires_grad:
            gk = np.empty_like(kernels.data)
            for j in range(k):
                gk[:, :, j] = np.tensordot(gb, shifted[j], axes=([0, 2], [0, 2]))
            _accumulate(kernels, gk)
        if x.requires_grad:
            gx = np.zeros_like(xd)
            for j in range(k):
                s = (k - 1 - j) * dilation
                if s < t_len:
                    gs = gb[:, :, s:] if s > 0 else gb
                    part = np.tensordot(kernels.data[:, :, j], gs, axes=([0], [1]))  # [C_in, B, T']
                    gx[:, :, : t_len - s] += np.moveaxis(part, 0, 1)
            _accumulate(x, gx[0] if squeeze else gx)

    return _make(data, (x, kernels), backward)


# --- fused LSTM cell ---------------------------------------------------------------------


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def lstm_cell(x_t: Tensor, state: Tensor, w_x: Tensor, w_h: Tensor, b: Tensor) -> Tensor:
    """One LSTM step as a single tape node (hand-derived adjoint).

    state packs [h | c] along the last axis, shape [B, 2H]; returns the next
    packed state. Gate blocks in the weight matrices are ordered
    [input | forget | candidate | output]. Fusing the step keeps recurrent
    graphs at one node per timestep instead of ~17.
    """
    d_h = w_h.shape[0]
    if state.ndim != 2 or state.shape[1] != 2 * d_h:
        raise ShapeMismatch(f"state must be [B, 2H={2 * d_h}], got {state.shape}")
    if x_t.ndim != 2 or x_t.shape[1] != w_x.shape[0]:
        raise ShapeMismatch(f"x_t {x_t.shape} does not match w_x {w_x.shape}")

    h_prev = state.data[:, :d_h]
    c_prev = state.data[:, d_h:]
    z = x_t.data @ w_x.data + h_prev @ w_h.data + b.data
    i = _sigmoid_np(z[:, :d_h])
    f = _sigmoid_np(z[:, d_h : 2 * d_h])
    g = np.tanh(z[:, 2 * d_h : 3 * d_h])
    o = _sigmoid_np(z[:, 3 * d_h :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    data = np.hstack([o * tc, c])

    def backward(grad):
        gh = grad[:, :d_h]
        gc = grad[:, d_h:].copy()
        gc += gh * o * (1.0 - tc * tc)
        dz = np.hstack([
            gc * g * i * (1.0 - i),
            gc * c_prev * f * (1.0 - f),
            gc * i * (1.0 - g * g),
            gh * tc * o * (1.0 - o),
        ])
        if x_t.requires_grad:
            _accumulate(x_t, dz @ w_x.data.T)
        if state.requires_grad:
            _accumulate(state, np.hstack([dz @ w_h.data.T, gc * f]))
        if w_x.requires_grad:
            _accumulate(w_x, x_t.data.T @ dz)
        if w_h.requires_grad:
            _accumulate(w_h, h_prev.T @ dz)
        if b.requires_grad:
            _accumulate(b, dz.sum(axis=0))

    return _make(data, (x_t, state, w_x, w_h, b), backward)


# --- loss -------------------------------------------------------------------------------


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = pred.size
    data = np.asarray((diff * diff).mean())

    def backward(g):
        scaled = g * 2.0 * diff / n
        if pred.requires_grad:
            _accumulate(pred, scaled)
        if target.requires_grad:
            _accumulate(target, -scaled)

    return _make(data, (pred, target), backward)
