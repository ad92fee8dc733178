"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import NumericalError, ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState
              ) -> tuple[list[np.ndarray], AdamState]:
    """Return updated copies of ``params``; ``state`` is advanced in place and returned.

    Every gradient is validated before anything is mutated.
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    for i, (p, g) in enumerate(zip(params, grads)):
        if np.shape(p) != np.shape(g):
            raise ShapeError(f"parameter {i}: shape {np.shape(p)} but gradient shape {np.shape(g)}")
        if not np.isfinite(g).all():
            raise NumericalError(f"parameter {i}: non-finite gradient")
    if state.step < 0:
        raise NumericalError("Adam step counter must be non-negative")
    if not state.m:
        state.m = [np.zeros_like(p, dtype=np.float64) for p in params]
        state.v = [np.zeros_like(p, dtype=np.float64) for p in params]
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    out = []
    for k, (p, g) in enumerate(zip(params, grads)):
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        m_hat = state.m[k] / c1
        v_hat = state.v[k] / c2
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out, state


class Adam:
    """Optimizer bound to a list of trainable tensors, reading their ``grad`` buffers."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, max_grad_norm: float | None = None):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        self.max_grad_norm = max_grad_norm

    def step(self) -> float:
        """Apply one update and return the global gradient norm before clipping."""
        grads = [p.grad if p.grad is not None else np.zeros_like(p.values) for p in self.params]
        norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
        if self.max_grad_norm is not None and np.isfinite(norm) and norm > self.max_grad_norm:
            scale = self.max_grad_norm / norm
            grads = [g * scale for g in grads]
        new, _ = adam_step([p.values for p in self.params], grads, self.state)
        # rebind rather than write in place: views taken during the last pass stay valid
        for p, v in zip(self.params, new):
            p.values = v
        return norm
