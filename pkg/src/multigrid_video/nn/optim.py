"""Stochastic gradient descent with momentum and coupled weight decay."""

from __future__ import annotations

import numpy as np


class SgdMomentum:
    """Classic momentum SGD.

    Per parameter: ``v = momentum * v + (grad + weight_decay * param)``
    then ``param -= lr * v``.  Decay is added to the gradient, so it is
    scaled by the learning rate like everything else.  Velocities are
    created lazily and keyed by parameter name.
    """

    def __init__(self, momentum: float = 0.9, weight_decay: float = 0.0):
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        if weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {weight_decay}")
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float) -> None:
        """Update `params` in place from `grads`."""
        for name, p in params.items():
            g = grads[name]
            v = self.velocities.get(name)
            if v is None:
                v = np.zeros_like(p)
                self.velocities[name] = v
            v *= self.momentum
            v += g
            if self.weight_decay:
                v += self.weight_decay * p
            p -= lr * v

    def state_arrays(self, prefix: str = "opt.") -> dict[str, np.ndarray]:
        """Velocity buffers keyed for checkpointing."""
        return {prefix + k: v for k, v in self.velocities.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray],
                          prefix: str = "opt.") -> None:
        self.velocities = {
            k[len(prefix):]: np.array(v)
            for k, v in arrays.items() if k.startswith(prefix)
        }
