"""Adam against a hand-stepped oracle, plus the stale-gradient guard."""

import numpy as np
import pytest

from biofuse.errors import ParameterError, StaleGradientError
from biofuse.numcore import Adam, Parameter


def adam_oracle(x0, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    # reference loop written independently of the implementation
    x = np.array(x0, dtype=float)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        x = x - lr * mh / (np.sqrt(vh) + eps)
    return x


class TestAdam:
    def test_matches_oracle_over_steps(self):
        rng = np.random.default_rng(0)
        grads = [rng.normal(size=3) for _ in range(5)]
        p = Parameter(np.array([1.0, -2.0, 0.5]), "p")
        opt = Adam([p], lr=1e-3)
        for g in grads:
            opt.zero_grad()
            p.accumulate(g)
            opt.step()
        assert np.allclose(p.value, adam_oracle([1.0, -2.0, 0.5], grads), atol=1e-15)

    def test_first_step_magnitude_close_to_lr(self):
        # bias correction makes the first update ~lr regardless of grad scale
        p = Parameter(np.zeros(1), "p")
        opt = Adam([p], lr=1e-3)
        p.accumulate(np.array([1e-4]))
        opt.step()
        assert np.isclose(abs(p.value[0]), 1e-3, rtol=1e-3)

    def test_step_without_backward_raises(self):
        p = Parameter(np.ones(2), "p")
        opt = Adam([p])
        p.accumulate(np.ones(2))
        opt.step()
        with pytest.raises(StaleGradientError):
            opt.step()

    def test_step_after_zero_grad_only_raises(self):
        p = Parameter(np.ones(2), "p")
        opt = Adam([p])
        opt.zero_grad()
        with pytest.raises(StaleGradientError):
            opt.step()

    def test_zero_gradient_param_stays_put_when_fresh(self):
        # a head that took part in backward with zero upstream grad must not move
        p = Parameter(np.array([3.0]), "p")
        opt = Adam([p])
        for _ in range(4):
            opt.zero_grad()
            p.accumulate(np.zeros(1))
            opt.step()
        assert p.value[0] == 3.0

    def test_rejects_bad_hyperparameters(self):
        p = Parameter(np.ones(1), "p")
        with pytest.raises(ParameterError):
            Adam([p], lr=0.0)
        with pytest.raises(ParameterError):
            Adam([p], betas=(1.0, 0.999))
        with pytest.raises(ParameterError):
            Adam([p], eps=0.0)
        with pytest.raises(ParameterError):
            Adam([])

    def test_quadratic_converges(self):
        # minimize (x - 4)^2; gradient 2(x - 4)
        p = Parameter(np.array([0.0]), "x")
        opt = Adam([p], lr=0.1)
        for _ in range(400):
            opt.zero_grad()
            p.accumulate(2.0 * (p.value - 4.0))
            opt.step()
        assert abs(p.value[0] - 4.0) < 1e-3
