"""Adam optimizer and the step-wise learning-rate halving schedule."""

from __future__ import annotations

import numpy as np

__all__ = ["Adam", "lr_schedule"]


class Adam:
    """Bias-corrected Adam over a named parameter dict.

    Defaults beta1=0.9, beta2=0.999; eps=1e-8. One step increments ``t``
    by exactly one and applies the update in place. A NaN or Inf gradient
    aborts the step, naming the offending parameter.
    """

    def __init__(self, params: dict, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, lr: float | None = None):
        if lr is None:
            lr = self.lr
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                raise ValueError(f"adam step with unpopulated grad for parameter '{name}'")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def lr_schedule(iteration: int, base_lr: float, warm_iters: int, halve_every: int) -> float:
    """Base rate for ``warm_iters`` steps, then halved per completed interval.

    The first halving takes effect at iteration warm_iters + halve_every;
    halve_every <= 0 disables halving (constant rate).
    """
    if halve_every <= 0 or iteration < warm_iters:
        return base_lr
    return base_lr / 2.0 ** ((iteration - warm_iters) // halve_every)
