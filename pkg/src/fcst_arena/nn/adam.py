"""Adam with bias correction over a named parameter map."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import MissingGradient


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_init(params: dict, learning_rate: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    state = AdamState(learning_rate, beta1, beta2, epsilon)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p.data)
        state.v[name] = np.zeros_like(p.data)
    return state


def adam_step(state: AdamState, params: dict) -> AdamState:
    """One update step; gradients are read from each parameter's .grad."""
    for name, p in params.items():
        if p.grad is None:
            raise MissingGradient(f"parameter '{name}' has no gradient")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = p.grad
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = state.m[name] / (1.0 - b1**t)
        v_hat = state.v[name] / (1.0 - b2**t)
        p.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return state


def zero_grads(params: dict) -> None:
    for p in params.values():
        p.zero_grad()
