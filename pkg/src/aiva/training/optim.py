"""Adam optimizer with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import ShapeError, Tensor


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates and the step count."""
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float):
    """One bias-corrected Adam update, in place.

    ``params`` maps names to Tensors, ``grads`` maps (a subset of) the
    same names to gradient arrays; missing names are skipped (frozen
    parameters). lr=0 is the identity. Returns (params, state).
    """
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        g = np.asarray(g)
        if g.shape != p.data.shape:
            raise ShapeError(f"adam_step: grad shape {g.shape} != param shape {p.data.shape} for {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype)
    return params, state


def collect_grads(params: dict) -> dict:
    return {name: p.grad for name, p in params.items()
            if p.requires_grad and p.grad is not None}


def zero_grads(params: dict):
    for p in params.values():
        p.grad = None
