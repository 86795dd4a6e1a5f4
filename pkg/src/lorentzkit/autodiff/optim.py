"""Adam optimizer (all trainable parameters live in linear spaces)."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError


def adam_init(params):
    """Fresh optimizer state for a {name: array} parameter dict."""
    return {
        name: {"m": np.zeros_like(v), "v": np.zeros_like(v), "t": 0}
        for name, v in params.items()
    }


def adam_step(params, grads, state, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
    """One Adam update with bias correction; returns (new_params, new_state)."""
    b1, b2 = betas
    new_params, new_state = {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        s = state[name]
        t = s["t"] + 1
        m = b1 * s["m"] + (1 - b1) * g
        v = b2 * s["v"] + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_state[name] = {"m": m, "v": v, "t": t}
    return new_params, new_state


class Adam:
    """In-place Adam over a Tape's parameters."""

    def __init__(self, tape, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.tape = tape
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = adam_init({k: t.value for k, t in tape.parameters().items()})

    def step(self):
        tensors = self.tape.parameters()
        params = {k: t.value for k, t in tensors.items()}
        grads = {
            k: (t.grad if t.grad is not None else np.zeros_like(t.value))
            for k, t in tensors.items()
        }
        new_params, self.state = adam_step(
            params, grads, self.state, lr=self.lr, betas=self.betas, eps=self.eps
        )
        for k, t in tensors.items():
            t.value = new_params[k]

    def zero_grad(self):
        self.tape.zero_grad()
