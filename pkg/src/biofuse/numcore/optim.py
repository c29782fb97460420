"""Adam optimizer over Parameter objects."""

import numpy as np

from ..errors import ParameterError, StaleGradientError


class Adam:
    """Adam with bias correction.

    Defaults: lr 1e-3, betas (0.9, 0.999), eps 1e-8. Refuses to step
    twice on the same gradients: every step consumes the freshness flag
    that a backward pass sets, so a second step without an intervening
    backward raises StaleGradientError.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        params = list(params)
        if not params:
            raise ParameterError("optimizer needs at least one parameter")
        if lr <= 0.0:
            raise ParameterError(f"learning rate must be positive, got {lr}")
        b1, b2 = betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ParameterError(f"betas must lie in [0, 1), got {betas}")
        if eps <= 0.0:
            raise ParameterError(f"eps must be positive, got {eps}")
        self.params = params
        self.lr = lr
        self.b1 = b1
        self.b2 = b2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in params]
        self._v = [np.zeros_like(p.value) for p in params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        stale = [p.name or "?" for p in self.params if not p.fresh]
        if stale:
            raise StaleGradientError(
                f"step without a fresh backward pass for: {', '.join(stale[:4])}"
            )
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.fresh = False
