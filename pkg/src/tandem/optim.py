"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import AutodiffError, Tensor


class OptimError(AutodiffError):
    pass


@dataclass
class AdamState:
    """Moment accumulators for one named parameter set.

    Defaults are the conventional Adam settings: lr=1e-3, beta1=0.9,
    beta2=0.999, eps=1e-8.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied in place to params.

    Parameters missing from `grads` are left untouched (their moments do
    not decay either; they were not part of this step's graph).
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        p = params[name]
        g = np.asarray(g)
        if not np.all(np.isfinite(g)):
            raise OptimError(f"non-finite gradient for parameter '{name}'")
        if g.shape != p.data.shape:
            raise OptimError(
                f"gradient shape {g.shape} does not match parameter '{name}' {p.data.shape}"
            )
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p.data -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.data.dtype)
    return params, state
