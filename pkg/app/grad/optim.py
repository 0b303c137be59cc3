"""Adam optimizer."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from app.errors import ContractError
from app.grad.tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


class Adam:
    """Textbook Adam with bias correction over a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            m=[np.zeros_like(p.data) for p in self.params],
            v=[np.zeros_like(p.data) for p in self.params],
        )

    def step(self, grads: Optional[Sequence[Optional[np.ndarray]]] = None) -> None:
        """Apply one update; ``grads`` defaults to each parameter's accumulated ``.grad``."""
        if grads is None:
            grads = [p.grad for p in self.params]
        adam_step(self.params, grads, self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def adam_step(params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], state: AdamState) -> None:
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError(
            f"adam_step: {len(params)} parameters, {len(grads)} gradients, {len(state.m)} moment slots"
        )
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for k, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape or state.m[k].shape != p.data.shape:
            raise ContractError(f"adam_step: gradient {g.shape} does not match parameter {p.data.shape}")
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = state.m[k] / correction1
        v_hat = state.v[k] / correction2
        p.data = (p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype)
