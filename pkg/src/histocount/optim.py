"""Adam optimizer with bias correction."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import NumericError


@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def init_like(self, params):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0
        return self


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place on the parameter arrays.

    params and grads are parallel lists of numpy arrays; state carries
    the moments. Returns (params, state) for convenience.
    """
    if not state.m:
        state.init_like(params)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient passed to adam_step")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**state.t)
        v_hat = v / (1 - b2**state.t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


class Adam:
    """Convenience wrapper binding AdamState to a list of trainable tensors."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        self.state.init_like([p.data for p in self.params])

    def step(self):
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.data)
            for p in self.params
        ]
        adam_step([p.data for p in self.params], grads, self.state)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
