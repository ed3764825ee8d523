"""Adam optimizer with bias correction.

Defaults follow the common convention: beta1=0.9, beta2=0.999, eps=1e-8,
with eps added outside the square root.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import ShapeError

Array = np.ndarray


@dataclass
class AdamState:
    step_count: int = 0
    first_moment: list[Array] = field(default_factory=list)
    second_moment: list[Array] = field(default_factory=list)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[Array], beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(step_count=0,
                   first_moment=[np.zeros_like(p) for p in params],
                   second_moment=[np.zeros_like(p) for p in params],
                   beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: list[Array], grads: list[Array],
              state: AdamState, lr: float) -> tuple[list[Array], AdamState]:
    """One Adam update; parameters and state buffers are updated in place."""
    if lr <= 0:
        raise ShapeError(f"learning rate must be positive, got {lr}")
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params, grads and state must have matching lengths")
    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - state.beta1**t
    bias2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    return params, state


class Adam:
    """Convenience wrapper driving ``adam_step`` from Tensor ``.grad`` fields."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.state = AdamState.for_params([p.data for p in self.params],
                                          beta1=beta1, beta2=beta2, eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = []
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ShapeError(f"parameter {i} has no gradient; run backward() first")
            grads.append(p.grad)
        adam_step([p.data for p in self.params], grads, self.state, self.lr)
