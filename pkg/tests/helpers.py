"""Shared numeric helpers for the test suite."""

import numpy as np


def numeric_grad(f, x, h=1e-4):
    """Central finite differences of a scalar function, elementwise.

    ``f`` takes no arguments and must read ``x`` afresh on every call; the
    array is perturbed in place and restored.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        grad[idx] = (fp - fm) / (2 * h)
        it.iternext()
    return grad


def rel_error(a, b):
    denom = np.maximum(1e-12, np.abs(a) + np.abs(b))
    return np.max(np.abs(a - b) / denom)
