"""Finite-difference verification across every differentiable component.

Shared by the ``biofuse gradcheck`` command and the acceptance tests. Each
case builds a small instance of one component, routes its output through a
fixed weighted-sum head so the loss is scalar, and compares every analytic
gradient (parameters and inputs alike) against central differences.
"""

from dataclasses import dataclass

import numpy as np

from .fusion import FusedModel, ModelConfig, MultimodalSample, _task_losses, collate
from .numcore import (
    Conv1d,
    Conv2d,
    Dense,
    GlobalAvgPool2d,
    GradCheckReport,
    MaskedBatchNorm,
    MaxPoolTime,
    Parameter,
    Relu,
    binary_cross_entropy,
    gradient_check,
    softmax_cross_entropy,
)

DEFAULT_TOLERANCE = 1e-4


@dataclass
class SuiteResult:
    name: str
    report: GradCheckReport

    def ok(self, tol=DEFAULT_TOLERANCE):
        return self.report.ok(tol)


def _weighted_head(out_shape, seed=1234):
    return np.random.default_rng(seed).normal(size=out_shape)


def _layer_case(name, layer, params, x, forward, backward, check_seed):
    """Check d(sum(W*out))/dtheta for every theta in params plus the input."""
    xp = Parameter(x, name=f"{name}.x")
    head = _weighted_head(forward(xp.value).shape)

    def run():
        out = forward(xp.value)
        xp.accumulate(backward(head))
        return float((head * out).sum())

    report = gradient_check(run, list(params) + [xp], np.random.default_rng(check_seed))
    return SuiteResult(name, report)


def _dense_case():
    rng = np.random.default_rng(10)
    layer = Dense(6, 5, rng)
    x = rng.normal(size=(4, 6))
    return _layer_case(
        "dense", layer, [layer.weights, layer.bias], x, layer.forward, layer.backward, 11
    )


def _relu_case():
    rng = np.random.default_rng(12)
    layer = Relu()
    x = rng.normal(size=(3, 7))
    return _layer_case("relu", layer, [], x, layer.forward, layer.backward, 13)


def _conv1d_case():
    rng = np.random.default_rng(14)
    layer = Conv1d(10, 3, rng)
    x = rng.normal(size=(2, 4, 10))
    return _layer_case(
        "conv1d", layer, [layer.weights, layer.bias], x, layer.forward, layer.backward, 15
    )


def _conv2d_case(stride, seed):
    rng = np.random.default_rng(seed)
    layer = Conv2d(2, 3, 3, stride, rng)
    x = rng.normal(size=(2, 2, 6, 6))
    return _layer_case(
        f"conv2d_stride{stride}",
        layer,
        [layer.weights, layer.bias],
        x,
        layer.forward,
        layer.backward,
        seed + 1,
    )


def _maxpool_case():
    rng = np.random.default_rng(18)
    layer = MaxPoolTime()
    x = rng.normal(size=(3, 5, 6))
    return _layer_case("maxpool_time", layer, [], x, layer.forward, layer.backward, 19)


def _gap_case():
    rng = np.random.default_rng(20)
    layer = GlobalAvgPool2d()
    x = rng.normal(size=(2, 3, 4, 4))
    return _layer_case("global_avg_pool", layer, [], x, layer.forward, layer.backward, 21)


def _masked_bn_case():
    rng = np.random.default_rng(22)
    layer = MaskedBatchNorm(6)
    x = rng.normal(size=(5, 6))
    present = np.array([True, True, False, True, True])
    return _layer_case(
        "masked_batchnorm",
        layer,
        [layer.gamma, layer.beta],
        x,
        lambda v: layer.forward(v, present, train=True),
        layer.backward,
        23,
    )


def _softmax_ce_case():
    rng = np.random.default_rng(24)
    logits = Parameter(rng.normal(size=(6, 4)), name="softmax_ce.logits")
    labels = np.array([0, 1, 2, 3, 1, 0])

    def run():
        loss, grad = softmax_cross_entropy(logits.value, labels)
        logits.accumulate(grad)
        return loss

    return SuiteResult(
        "softmax_cross_entropy", gradient_check(run, [logits], np.random.default_rng(25))
    )


def _bce_case():
    rng = np.random.default_rng(26)
    logits = Parameter(rng.normal(size=(7, 1)), name="bce.logits")
    labels = np.array([0, 1, 1, 0, 1, 0, 0])

    def run():
        loss, grad = binary_cross_entropy(logits.value, labels)
        logits.accumulate(grad)
        return loss

    return SuiteResult(
        "binary_cross_entropy", gradient_check(run, [logits], np.random.default_rng(27))
    )


def _fused_model_case():
    cfg = ModelConfig(
        n_subjects=3, image_size=8, face_widths=(2, 3), finger_widths=(2, 3), trunk_width=16, seed=0
    )
    model = FusedModel(cfg)
    rng = np.random.default_rng(28)
    samples = [
        MultimodalSample(
            subject_index=i % 3,
            gender_label=i % 2,
            ecg=rng.random((3, 300)),
            face=rng.random((8, 8)),
            finger=rng.random((8, 8)),
        )
        for i in range(4)
    ]
    samples[1].face = None  # exercise the masked path
    batch = collate(samples, 8)

    def run():
        id_logits, g_logits = model.forward(batch, train=True)
        id_loss, g_loss, id_grad, g_grad = _task_losses(model, batch, id_logits, g_logits)
        model.backward(id_grad, g_grad)
        return id_loss + g_loss

    report = gradient_check(
        run, model.parameters(), np.random.default_rng(29), samples_per_param=2
    )
    return SuiteResult("fused_model", report)


def run_gradient_suite():
    """All components, fixed seeds; deterministic across runs."""
    return [
        _dense_case(),
        _relu_case(),
        _conv1d_case(),
        _conv2d_case(1, 16),
        _conv2d_case(2, 30),
        _maxpool_case(),
        _gap_case(),
        _masked_bn_case(),
        _softmax_ce_case(),
        _bce_case(),
        _fused_model_case(),
    ]
