"""Parameter updates: Adam with bias correction, and SGD with momentum."""
from __future__ import annotations

import numpy as np


def zero_grad(params):
    for p in params:
        p.grad = None


def adam_step(params, t: int, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; ``t`` counts steps from 1."""
    if t < 1:
        raise ValueError(f"Adam step index must be >= 1, got {t}")
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1**t)
        v_hat = p.v / (1.0 - beta2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def sgd_step(params, lr, momentum=0.0):
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        p.vel = momentum * p.vel + g
        p.data -= lr * p.vel
