"""Losses against direct-formula oracles and finite differences."""

import numpy as np
import pytest

from biofuse.errors import DimensionError, EmptyInputError, LabelError, ParameterError
from biofuse.numcore import binary_cross_entropy, joint_loss, softmax_cross_entropy


def softmax_oracle(logits, labels):
    # direct formula at moderate logits where exp cannot overflow
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    return -np.mean(np.log(p[np.arange(len(labels)), labels]))


class TestSoftmaxCrossEntropy:
    def test_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(6, 4))
        labels = rng.integers(0, 4, size=6)
        loss, _ = softmax_cross_entropy(logits, labels)
        assert np.isclose(loss, softmax_oracle(logits, labels), atol=1e-12)

    def test_uniform_logits_give_log_k(self):
        logits = np.zeros((3, 5))
        loss, _ = softmax_cross_entropy(logits, np.array([0, 2, 4]))
        assert np.isclose(loss, np.log(5.0))

    def test_stable_at_extreme_logits(self):
        logits = np.array([[1000.0, 0.0], [-1000.0, 0.0]])
        loss, grad = softmax_cross_entropy(logits, np.array([0, 1]))
        assert np.isfinite(loss)
        assert np.isfinite(grad).all()
        assert loss < 1e-6  # both samples are classified with near certainty

    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(4, 3))
        labels = np.array([0, 2, 1, 2])
        _, grad = softmax_cross_entropy(logits, labels)
        eps = 1e-6
        for i, j in [(0, 0), (1, 2), (3, 1), (2, 2)]:
            lp = logits.copy()
            lp[i, j] += eps
            lm = logits.copy()
            lm[i, j] -= eps
            num = (
                softmax_cross_entropy(lp, labels)[0] - softmax_cross_entropy(lm, labels)[0]
            ) / (2 * eps)
            assert abs(num - grad[i, j]) < 1e-8

    def test_grad_rows_sum_to_zero(self):
        rng = np.random.default_rng(2)
        logits = rng.normal(size=(5, 7))
        _, grad = softmax_cross_entropy(logits, rng.integers(0, 7, size=5))
        assert np.allclose(grad.sum(axis=1), 0.0, atol=1e-15)

    def test_label_out_of_range(self):
        with pytest.raises(LabelError):
            softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
        with pytest.raises(LabelError):
            softmax_cross_entropy(np.zeros((2, 3)), np.array([-1, 0]))

    def test_float_labels_rejected(self):
        with pytest.raises(LabelError):
            softmax_cross_entropy(np.zeros((2, 3)), np.array([0.0, 1.0]))

    def test_empty_batch(self):
        with pytest.raises(EmptyInputError):
            softmax_cross_entropy(np.zeros((0, 3)), np.zeros(0, dtype=int))


class TestBinaryCrossEntropy:
    def test_matches_direct_formula(self):
        rng = np.random.default_rng(3)
        z = rng.normal(size=(5, 1))
        y = rng.integers(0, 2, size=5)
        loss, _ = binary_cross_entropy(z, y)
        p = 1.0 / (1.0 + np.exp(-z.reshape(-1)))
        want = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
        assert np.isclose(loss, want, atol=1e-12)

    def test_zero_logit_gives_log2(self):
        loss, _ = binary_cross_entropy(np.zeros((4, 1)), np.array([0, 1, 0, 1]))
        assert np.isclose(loss, np.log(2.0))

    def test_stable_at_extreme_logits(self):
        loss, grad = binary_cross_entropy(np.array([[800.0], [-800.0]]), np.array([1, 0]))
        assert np.isfinite(loss) and loss < 1e-6
        assert np.isfinite(grad).all()

    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(4)
        z = rng.normal(size=(6, 1))
        y = rng.integers(0, 2, size=6)
        _, grad = binary_cross_entropy(z, y)
        eps = 1e-6
        for i in range(6):
            zp = z.copy()
            zp[i, 0] += eps
            zm = z.copy()
            zm[i, 0] -= eps
            num = (binary_cross_entropy(zp, y)[0] - binary_cross_entropy(zm, y)[0]) / (2 * eps)
            assert abs(num - grad[i, 0]) < 1e-8

    def test_bad_labels_rejected(self):
        with pytest.raises(LabelError):
            binary_cross_entropy(np.zeros((2, 1)), np.array([0, 2]))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            binary_cross_entropy(np.zeros((3, 1)), np.array([0, 1]))


class TestJointLoss:
    def test_equal_weight_sum(self):
        assert joint_loss(1.25, 0.5) == 1.75

    def test_rejects_negative_or_nonfinite(self):
        with pytest.raises(ParameterError):
            joint_loss(-0.1, 0.5)
        with pytest.raises(ParameterError):
            joint_loss(float("nan"), 0.5)
        with pytest.raises(ParameterError):
            joint_loss(0.5, float("inf"))
