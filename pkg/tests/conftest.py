import numpy as np
import pytest

from tandem.autodiff import Tape, backward


def central_difference(fn, tensors, h=1e-5):
    """Numerical gradients of scalar fn() w.r.t. each tensor in `tensors`
    by central differences. fn must be re-runnable (pure in the tensors)."""
    grads = []
    for t in tensors:
        num = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = float(fn().data)
            flat[i] = orig - h
            lm = float(fn().data)
            flat[i] = orig
            nflat[i] = (lp - lm) / (2 * h)
        grads.append(num)
    return grads


def max_relative_error(fn, tensors, h=1e-5):
    """Max relative error between tape gradients and central differences."""
    with Tape() as tape:
        loss = fn()
    analytic = backward(tape, loss)
    numeric = central_difference(fn, tensors, h=h)
    worst = 0.0
    for t, num in zip(tensors, numeric):
        g = analytic.get(t)
        assert g is not None, f"no gradient for {t.name or t}"
        denom = np.maximum(np.abs(num), 1e-3)
        worst = max(worst, float(np.max(np.abs(g - num) / denom)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
