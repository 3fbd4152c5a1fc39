"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "AdamState":
        state = cls(**hyper)
        state.first_moment = [np.zeros_like(p.data) for p in params]
        state.second_moment = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: Sequence[Tensor], state: AdamState) -> AdamState:
    """Apply one Adam update in place and clear the gradients."""
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.data) for p in params]
        state.second_moment = [np.zeros_like(p.data) for p in params]
    if len(state.first_moment) != len(params):
        raise ValueError(f"adam_step: state tracks {len(state.first_moment)} parameters, got {len(params)}")
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValueError(f"adam_step: parameter {p.name or i} has no gradient")
        if state.first_moment[i].shape != p.data.shape:
            raise ValueError(f"adam_step: moment shape mismatch for parameter {p.name or i}")

    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step_count
    correction2 = 1.0 - b2 ** state.step_count
    for p, m, v in zip(params, state.first_moment, state.second_moment):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        p.data = p.data - (state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(p.data.dtype)
        p.grad = None
    return state
