"""Adaptive-moment optimizer with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]


@dataclass
class AdamW:
    lr: float = 1e-3
    weight_decay: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def init(self, params: list[np.ndarray]) -> AdamState:
        return AdamState(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])

    def step(self, params, grads, state: AdamState):
        """Return updated ``(params, state)``; inputs are not modified.

        Decay is applied to the parameter directly (``p -= lr * wd * p``),
        separately from the bias-corrected moment step.
        """
        t = state.step + 1
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        new_p, new_m, new_v = [], [], []
        for p, g, m, v in zip(params, grads, state.m, state.v):
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            p = p * (1.0 - self.lr * self.weight_decay)
            p = p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            new_p.append(p)
            new_m.append(m)
            new_v.append(v)
        return new_p, AdamState(t, new_m, new_v)


def optimizer_step(params, grads, state: AdamState | None, opt: AdamW):
    """Functional form of :meth:`AdamW.step`; ``state=None`` starts fresh."""
    if state is None:
        state = opt.init(params)
    return opt.step(params, grads, state)
