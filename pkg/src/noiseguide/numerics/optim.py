"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Param


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, state: AdamState | None = None,
              grads=None) -> AdamState:
    """Apply one Adam update in place and return the (mutated) state.

    ``grads`` defaults to each param's accumulated ``.grad``.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if state is None:
        state = AdamState()
    params = list(params)
    if grads is None:
        grads = [p.grad for p in params]
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for p, g in zip(params, grads):
        key = p.name
        m = state.m.get(key)
        if m is None:
            m = np.zeros_like(p.values)
            v = np.zeros_like(p.values)
        else:
            v = state.v[key]
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[key], state.v[key] = m, v
        p.values = p.values - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


class Adam:
    """Stateful wrapper around :func:`adam_step`."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params: list[Param] = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("Adam needs uniquely named params")
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        adam_step(self.params, self.lr, self.betas[0], self.betas[1], self.eps, self.state)


def clip_grad_norm(params, max_norm: float) -> float:
    """Rescale grads in place so their global L2 norm is at most ``max_norm``."""
    params = list(params)
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params)))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad = p.grad * scale
    return total
