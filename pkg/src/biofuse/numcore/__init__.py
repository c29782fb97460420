"""Minimal float64 neural-network engine: layers, losses, Adam, gradient checking."""

from .params import Parameter
from .layers import (
    Conv1d,
    Conv2d,
    Dense,
    GlobalAvgPool2d,
    MaskedBatchNorm,
    MaxPoolTime,
    Relu,
    he_normal,
    require_some_modality,
)
from .losses import binary_cross_entropy, joint_loss, softmax_cross_entropy
from .optim import Adam
from .gradcheck import GradCheckReport, gradient_check
from .checkpoint import load_arrays, save_arrays

__all__ = [
    "Adam",
    "Conv1d",
    "Conv2d",
    "Dense",
    "GlobalAvgPool2d",
    "GradCheckReport",
    "MaskedBatchNorm",
    "MaxPoolTime",
    "Parameter",
    "Relu",
    "binary_cross_entropy",
    "gradient_check",
    "he_normal",
    "joint_loss",
    "load_arrays",
    "require_some_modality",
    "save_arrays",
    "softmax_cross_entropy",
]
