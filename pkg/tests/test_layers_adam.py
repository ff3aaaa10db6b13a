"""LSTM recurrence against hand oracles and finite differences; Adam against
a closed-form first step and an independent scalar simulation."""

import math

import numpy as np
import pytest

from fcst_arena import nn
from fcst_arena.errors import MissingGradient, ShapeMismatch
from fcst_arena.nn.tensor import Tensor, tsum
from fcst_arena.rng import SeededRng

from helpers import finite_difference_grad, max_rel_err

GRAD_TOL = 1e-4


def _zero_lstm_params(d_in, d_h):
    return {
        "w_x": Tensor(np.zeros((d_in, 4 * d_h)), requires_grad=True),
        "w_h": Tensor(np.zeros((d_h, 4 * d_h)), requires_grad=True),
        "b": Tensor(np.zeros(4 * d_h), requires_grad=True),
    }


def test_lstm_zero_params_zero_hidden():
    params = _zero_lstm_params(2, 3)
    x = Tensor(np.random.default_rng(0).normal(size=(6, 2)))
    h = nn.lstm_layer(x, params)
    assert h.shape == (6, 3)
    assert np.array_equal(h.data, np.zeros((6, 3)))


def test_lstm_scalar_hand_oracle():
    # T=1, D_in=1, D_h=1, h0=c0=0: only w_x and b matter.
    wx = np.array([[0.5, -0.3, 0.8, 0.2]])
    b = np.array([0.1, 0.4, -0.2, 0.3])
    params = {
        "w_x": Tensor(wx, requires_grad=True),
        "w_h": Tensor(np.array([[0.7, 0.7, 0.7, 0.7]]), requires_grad=True),
        "b": Tensor(b, requires_grad=True),
    }
    x_val = 1.25
    h = nn.lstm_layer(Tensor([[x_val]]), params)

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    z = [x_val * wx[0, j] + b[j] for j in range(4)]
    i, f, g, o = sig(z[0]), sig(z[1]), math.tanh(z[2]), sig(z[3])
    c = i * g  # f * c0 = 0
    expected = o * math.tanh(c)
    assert h.data[0, 0] == pytest.approx(expected, rel=1e-12)


def test_lstm_shape_checks():
    params = _zero_lstm_params(2, 3)
    with pytest.raises(ShapeMismatch):
        nn.lstm_layer(Tensor(np.zeros((4, 5))), params)
    with pytest.raises(ShapeMismatch):
        nn.lstm_layer(Tensor(np.zeros(4)), params)


@pytest.mark.parametrize("seed", range(5))
def test_lstm_gradient_all_params(seed):
    rng = SeededRng(seed)
    params = nn.init_lstm_params(rng, 3, 3)
    x = Tensor(np.random.default_rng(seed).normal(size=(5, 3)))

    def forward():
        return tsum(nn.lstm_layer(x, params)[4:5]).item()  # sum of h_T

    loss = tsum(nn.lstm_layer(x, params)[4:5])
    loss.backward()
    for name, p in params.items():
        numeric = finite_difference_grad(forward, p.data)
        assert max_rel_err(p.grad, numeric) <= GRAD_TOL, f"param {name}"


def test_lstm_gradient_wrt_input():
    params = nn.init_lstm_params(SeededRng(2), 2, 3)
    x = Tensor(np.random.default_rng(2).normal(size=(4, 2)), requires_grad=True)

    def forward():
        return tsum(nn.lstm_layer(x, params)).item()

    loss = tsum(nn.lstm_layer(x, params))
    loss.backward()
    assert max_rel_err(x.grad, finite_difference_grad(forward, x.data)) <= GRAD_TOL


def test_forget_gate_bias_initialized_to_one():
    params = nn.init_lstm_params(SeededRng(0), 2, 4)
    b = params["b"].data
    assert np.array_equal(b[4:8], np.ones(4))
    assert np.array_equal(b[0:4], np.zeros(4))
    assert np.array_equal(b[8:16], np.zeros(8))


def test_adam_zero_gradient_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.zeros(2)
    params = {"p": p}
    state = nn.adam_init(params, learning_rate=0.1)
    nn.adam_step(state, params)
    assert np.array_equal(p.data, [1.0, -2.0])
    assert state.step_count == 1


def test_adam_first_step_closed_form():
    # g=1, t=1: m_hat=1, v_hat=1 -> update = -lr / (1 + eps)
    p = Tensor(np.array([0.0]), requires_grad=True)
    p.grad = np.array([1.0])
    params = {"p": p}
    lr = 1e-3
    state = nn.adam_init(params, learning_rate=lr)
    nn.adam_step(state, params)
    assert p.data[0] == pytest.approx(-lr / (1.0 + 1e-8), rel=1e-12)
    assert abs(p.data[0] + lr) < 1e-9


def test_adam_matches_reference_scalar_simulation():
    # Independent plain-float Adam on f(w) = w^2 from w=1.
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    w_ref, m_ref, v_ref = 1.0, 0.0, 0.0
    trajectory = []
    for t in range(1, 101):
        g = 2.0 * w_ref
        m_ref = b1 * m_ref + (1 - b1) * g
        v_ref = b2 * v_ref + (1 - b2) * g * g
        w_ref -= lr * (m_ref / (1 - b1**t)) / (math.sqrt(v_ref / (1 - b2**t)) + eps)
        trajectory.append(w_ref)

    p = Tensor(np.array([1.0]), requires_grad=True)
    params = {"p": p}
    state = nn.adam_init(params, learning_rate=lr)
    for t in range(100):
        p.grad = 2.0 * p.data
        nn.adam_step(state, params)
        assert p.data[0] == pytest.approx(trajectory[t], rel=1e-12)
    assert abs(p.data[0]) < 0.1


def test_adam_missing_gradient():
    p = Tensor(np.array([1.0]), requires_grad=True)
    params = {"p": p}
    state = nn.adam_init(params)
    with pytest.raises(MissingGradient):
        nn.adam_step(state, params)
