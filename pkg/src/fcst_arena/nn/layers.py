"""Layer primitives built on the tensor tape: LSTM recurrence, dense head,
and fan-based initializers. Gate layout in every LSTM weight matrix is
[input | forget | candidate | output] along the last axis.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from ..rng import SeededRng
from .tensor import Tensor, add, concat, lstm_cell, matmul


def glorot_uniform(rng: SeededRng, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape)


def init_lstm_params(rng: SeededRng, d_in: int, d_h: int) -> dict:
    """One LSTM layer: w_x [D,4H], w_h [H,4H], b [4H].

    Forget-gate bias starts at 1.0 so early training does not flush state.
    """
    b = np.zeros(4 * d_h)
    b[d_h : 2 * d_h] = 1.0
    return {
        "w_x": Tensor(glorot_uniform(rng, (d_in, 4 * d_h), d_in, 4 * d_h), requires_grad=True),
        "w_h": Tensor(glorot_uniform(rng, (d_h, 4 * d_h), d_h, 4 * d_h), requires_grad=True),
        "b": Tensor(b, requires_grad=True),
    }


def init_dense_params(rng: SeededRng, d_in: int, d_out: int) -> dict:
    return {
        "w": Tensor(glorot_uniform(rng, (d_in, d_out), d_in, d_out), requires_grad=True),
        "b": Tensor(np.zeros(d_out), requires_grad=True),
    }


def init_conv_params(rng: SeededRng, c_out: int, c_in: int, k: int, bias: bool = True) -> dict:
    params = {
        "w": Tensor(glorot_uniform(rng, (c_out, c_in, k), c_in * k, c_out * k), requires_grad=True),
    }
    if bias:
        params["b"] = Tensor(np.zeros((c_out, 1)), requires_grad=True)
    return params


def dense(x: Tensor, params: dict) -> Tensor:
    return add(matmul(x, params["w"]), params["b"])


def lstm_step(x_t: Tensor, h: Tensor, c: Tensor, params: dict):
    """One recurrence step on a [B, D] slice; returns (h_next, c_next)."""
    state = concat([h, c], axis=1)
    nxt = lstm_cell(x_t, state, params["w_x"], params["w_h"], params["b"])
    d_h = params["w_h"].shape[0]
    return nxt[:, :d_h], nxt[:, d_h:]


def lstm_sequence(xs: list, params: dict, h0: Tensor | None = None, c0: Tensor | None = None) -> list:
    """Run the recurrence over a list of [B, D] step tensors; returns all h_t."""
    batch = xs[0].shape[0]
    d_h = params["w_h"].shape[0]
    if h0 is not None or c0 is not None:
        h = h0 if h0 is not None else Tensor(np.zeros((batch, d_h)))
        c = c0 if c0 is not None else Tensor(np.zeros((batch, d_h)))
        state = concat([h, c], axis=1)
    else:
        state = Tensor(np.zeros((batch, 2 * d_h)))
    hs = []
    for x_t in xs:
        state = lstm_cell(x_t, state, params["w_x"], params["w_h"], params["b"])
        hs.append(state[:, :d_h])
    return hs


def lstm_layer(x_seq: Tensor, params: dict, h0: Tensor | None = None, c0: Tensor | None = None) -> Tensor:
    """Full hidden sequence [T, D_h] for one input sequence [T, D_in]."""
    if x_seq.ndim != 2:
        raise ShapeMismatch(f"x_seq must be [T, D_in], got {x_seq.shape}")
    if params["w_x"].shape[0] != x_seq.shape[1]:
        raise ShapeMismatch(
            f"input dim {x_seq.shape[1]} does not match w_x {params['w_x'].shape}"
        )
    t_len = x_seq.shape[0]
    xs = [x_seq[t : t + 1] for t in range(t_len)]
    hs = lstm_sequence(xs, params, h0, c0)
    return concat(hs, axis=0)
