"""Loss functions. Each returns (scalar loss, gradient w.r.t. the logits).

Both losses work on raw logits and fold the final nonlinearity into the
loss for numerical stability, so no probability ever passes through an
explicit log().
"""

import numpy as np

from ..errors import DimensionError, EmptyInputError, LabelError, ParameterError


def softmax_cross_entropy(logits, labels):
    """Mean categorical cross-entropy over the batch.

    logits: [batch, n_classes]; labels: [batch] integer class indices.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise DimensionError(f"logits must be [batch, classes], got {logits.shape}")
    b, k = logits.shape
    if b == 0:
        raise EmptyInputError("cross-entropy over an empty batch")
    labels = np.asarray(labels)
    if labels.shape != (b,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch {b}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise LabelError(f"labels must be integers, got dtype {labels.dtype}")
    if labels.min() < 0 or labels.max() >= k:
        raise LabelError(f"label outside [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = -logp[np.arange(b), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(b), labels] -= 1.0
    return loss, grad / b


def binary_cross_entropy(logits, labels):
    """Mean binary cross-entropy on a single logit per sample.

    logits: [batch, 1] or [batch]; labels: [batch] in {0, 1}.
    Uses the max(z,0) - z*y + log1p(exp(-|z|)) form, exact for any z.
    """
    logits = np.asarray(logits, dtype=np.float64)
    z = logits.reshape(-1)
    b = z.shape[0]
    if b == 0:
        raise EmptyInputError("cross-entropy over an empty batch")
    if logits.size != logits.shape[0] and not (logits.ndim == 2 and logits.shape[1] == 1):
        raise DimensionError(f"expected one logit per sample, got {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != (b,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch {b}")
    y = labels.astype(np.float64)
    if not np.isin(labels, (0, 1)).all():
        raise LabelError("binary labels must be 0 or 1")
    loss = np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z))))
    # branch on sign so exp never overflows
    sig = np.empty_like(z)
    pos = z >= 0
    sig[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    sig[~pos] = ez / (1.0 + ez)
    grad = ((sig - y) / b).reshape(logits.shape)
    return loss, grad


def joint_loss(id_loss, gender_loss):
    """Equal-weight sum of the two task losses."""
    for name, v in (("id", id_loss), ("gender", gender_loss)):
        v = float(v)
        if not np.isfinite(v) or v < 0.0:
            raise ParameterError(f"{name} loss must be finite and non-negative, got {v}")
    return float(id_loss) + float(gender_loss)
