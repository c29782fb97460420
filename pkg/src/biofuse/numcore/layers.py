"""Neural-network layers on float64 numpy arrays with hand-derived backward passes.

Every layer caches on ``forward`` exactly what its ``backward`` needs,
accumulates parameter gradients into ``Parameter.grad`` (so repeated
backward calls sum, as required for gradient accumulation), and returns
the gradient with respect to its input.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, EmptyInputError, MaskExhaustionError, ParameterError
from .params import Parameter


def he_normal(rng, fan_in, shape):
    # He initialization keeps ReLU pre-activation variance near 1.
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Dense:
    """Affine map: y = x @ W + b for x of shape [batch, d_in]."""

    def __init__(self, d_in, d_out, rng, name="dense"):
        if d_in < 1 or d_out < 1:
            raise ParameterError(f"dense dims must be positive, got {d_in}x{d_out}")
        self.d_in = d_in
        self.d_out = d_out
        self.weights = Parameter(he_normal(rng, d_in, (d_in, d_out)), f"{name}.weights")
        self.bias = Parameter(np.zeros(d_out), f"{name}.bias")
        self._x = None

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise DimensionError(
                f"dense expects [batch, {self.d_in}], got {x.shape}"
            )
        self._x = x
        return x @ self.weights.value + self.bias.value

    def backward(self, grad):
        if self._x is None:
            raise RuntimeError("backward before forward")
        self.weights.accumulate(self._x.T @ grad)
        self.bias.accumulate(grad.sum(axis=0))
        return grad @ self.weights.value.T

    def params(self):
        return [self.weights, self.bias]


class Conv1d:
    """Per-timestep filter bank over the sample axis of [batch, time, samples].

    Output position ``c`` has its own ``kernel``-tap filter reading the
    zero-padded neighborhood of input position ``c``, so the output shape
    equals the input shape and each timestep is transformed independently.
    """

    def __init__(self, channels, kernel, rng, name="conv1d"):
        if kernel % 2 != 1 or kernel < 1:
            raise ParameterError(f"kernel must be odd and positive, got {kernel}")
        if channels < 1:
            raise ParameterError(f"channels must be positive, got {channels}")
        self.channels = channels
        self.kernel = kernel
        self.pad = kernel // 2
        self.weights = Parameter(he_normal(rng, kernel, (channels, kernel)), f"{name}.weights")
        self.bias = Parameter(np.zeros(channels), f"{name}.bias")
        self._win = None

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.channels:
            raise DimensionError(
                f"conv1d expects [batch, time, {self.channels}], got {x.shape}"
            )
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad)))
        # [batch, time, channels, kernel]: window c covers xp[..., c : c + kernel]
        win = sliding_window_view(xp, self.kernel, axis=2)
        self._win = win
        return np.einsum("btck,ck->btc", win, self.weights.value) + self.bias.value

    def backward(self, grad):
        if self._win is None:
            raise RuntimeError("backward before forward")
        self.weights.accumulate(np.einsum("btck,btc->ck", self._win, grad))
        self.bias.accumulate(grad.sum(axis=(0, 1)))
        b, t, c = grad.shape
        dxp = np.zeros((b, t, c + 2 * self.pad))
        for k in range(self.kernel):
            dxp[:, :, k : k + c] += self.weights.value[:, k] * grad
        return dxp[:, :, self.pad : self.pad + c]

    def params(self):
        return [self.weights, self.bias]


class Relu:
    """Elementwise max(x, 0)."""

    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return np.where(self._mask, grad, 0.0)

    def params(self):
        return []


class MaxPoolTime:
    """Global max over the time axis: [batch, time, features] -> [batch, features].

    Ties resolve to the earliest timestep, and the full incoming gradient
    is routed to that single winner.
    """

    def __init__(self):
        self._amax = None
        self._shape = None

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3:
            raise DimensionError(f"maxpool expects [batch, time, features], got {x.shape}")
        if x.shape[1] == 0:
            raise EmptyInputError("maxpool over an empty time axis")
        self._amax = np.argmax(x, axis=1)
        self._shape = x.shape
        return np.take_along_axis(x, self._amax[:, None, :], axis=1)[:, 0, :]

    def backward(self, grad):
        dx = np.zeros(self._shape)
        np.put_along_axis(dx, self._amax[:, None, :], grad[:, None, :], axis=1)
        return dx

    def params(self):
        return []


class Conv2d:
    """2-D convolution, same padding (kernel // 2) then stride subsampling.

    Input [batch, c_in, h, w] -> [batch, c_out, ho, wo] with
    ho = (h + 2*pad - kernel) // stride + 1. Implemented as im2col plus
    one matmul per call so batches stay fast in numpy.
    """

    def __init__(self, c_in, c_out, kernel, stride, rng, name="conv2d"):
        if kernel < 1 or stride < 1:
            raise ParameterError(f"kernel/stride must be positive, got {kernel}/{stride}")
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        self.stride = stride
        self.pad = kernel // 2
        fan_in = c_in * kernel * kernel
        self.weights = Parameter(
            he_normal(rng, fan_in, (c_out, c_in, kernel, kernel)), f"{name}.weights"
        )
        # small random bias: rectified units then threshold at different
        # input levels from the first step, instead of all scaling together
        self.bias = Parameter(
            0.3 * np.sqrt(2.0 / fan_in) * rng.standard_normal(c_out), f"{name}.bias"
        )
        self._cols = None
        self._xshape = None

    def out_size(self, h, w):
        ho = (h + 2 * self.pad - self.kernel) // self.stride + 1
        wo = (w + 2 * self.pad - self.kernel) // self.stride + 1
        return ho, wo

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise DimensionError(
                f"conv2d expects [batch, {self.c_in}, h, w], got {x.shape}"
            )
        b, _, h, w = x.shape
        if h + 2 * self.pad < self.kernel or w + 2 * self.pad < self.kernel:
            raise DimensionError(f"input {h}x{w} smaller than kernel {self.kernel}")
        ho, wo = self.out_size(h, w)
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad), (self.pad, self.pad)))
        win = sliding_window_view(xp, (self.kernel, self.kernel), axis=(2, 3))
        win = win[:, :, :: self.stride, :: self.stride]
        # [batch, ho, wo, c_in, k, k] -> [batch, ho*wo, c_in*k*k]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho * wo, -1)
        self._cols = cols
        self._xshape = x.shape
        wmat = self.weights.value.reshape(self.c_out, -1)
        out = cols @ wmat.T + self.bias.value
        return out.reshape(b, ho, wo, self.c_out).transpose(0, 3, 1, 2)

    def backward(self, grad):
        if self._cols is None:
            raise RuntimeError("backward before forward")
        b, _, ho, wo = grad.shape
        _, _, h, w = self._xshape
        gmat = grad.transpose(0, 2, 3, 1).reshape(b, ho * wo, self.c_out)
        dw = np.einsum("bnc,bnf->cf", gmat, self._cols)
        self.weights.accumulate(dw.reshape(self.weights.value.shape))
        self.bias.accumulate(grad.sum(axis=(0, 2, 3)))
        dcols = gmat @ self.weights.value.reshape(self.c_out, -1)
        dcols = dcols.reshape(b, ho, wo, self.c_in, self.kernel, self.kernel)
        dcols = dcols.transpose(0, 3, 1, 2, 4, 5)
        hp, wp = h + 2 * self.pad, w + 2 * self.pad
        dxp = np.zeros((b, self.c_in, hp, wp))
        s = self.stride
        for i in range(self.kernel):
            for j in range(self.kernel):
                dxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += dcols[..., i, j]
        return dxp[:, :, self.pad : self.pad + h, self.pad : self.pad + w]

    def params(self):
        return [self.weights, self.bias]


class GlobalAvgPool2d:
    """Mean over the spatial axes: [batch, channels, h, w] -> [batch, channels]."""

    def __init__(self):
        self._shape = None

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4:
            raise DimensionError(f"pool expects [batch, channels, h, w], got {x.shape}")
        if x.shape[2] == 0 or x.shape[3] == 0:
            raise EmptyInputError("pool over an empty spatial extent")
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad):
        _, _, h, w = self._shape
        return np.broadcast_to(grad[:, :, None, None] / (h * w), self._shape).copy()

    def params(self):
        return []


class MaskedBatchNorm:
    """Batch normalization that ignores masked-out rows.

    ``present`` flags which rows of the batch carry real data; statistics
    are computed over present rows only, absent rows come out (and stay)
    exactly zero, and a batch with no present rows is a no-op that leaves
    the running statistics untouched. Present rows are gathered with fancy
    indexing, so their outputs are bitwise identical to running the same
    rows as their own batch.
    """

    def __init__(self, dim, momentum=0.1, epsilon=1e-5, name="bn"):
        if not 0.0 < momentum <= 1.0:
            raise ParameterError(f"momentum must lie in (0, 1], got {momentum}")
        if epsilon <= 0.0:
            raise ParameterError(f"epsilon must be positive, got {epsilon}")
        self.dim = dim
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = Parameter(np.ones(dim), f"{name}.gamma")
        self.beta = Parameter(np.zeros(dim), f"{name}.beta")
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self._cache = None

    def forward(self, x, present, train):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"batchnorm expects [batch, {self.dim}], got {x.shape}")
        present = np.asarray(present, dtype=bool)
        if present.shape != (x.shape[0],):
            raise DimensionError(
                f"present mask shape {present.shape} does not match batch {x.shape[0]}"
            )
        xs = x[present]
        n = xs.shape[0]
        y = np.zeros_like(x)
        if n == 0:
            self._cache = (present, None, None, 0, train)
            return y
        if train:
            mean = xs.mean(axis=0)
            var = xs.var(axis=0)  # biased, matching the normalization below
            invstd = 1.0 / np.sqrt(var + self.epsilon)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            invstd = 1.0 / np.sqrt(self.running_var + self.epsilon)
            mean = self.running_mean
        xhat = (xs - mean) * invstd
        y[present] = self.gamma.value * xhat + self.beta.value
        self._cache = (present, xhat, invstd, n, train)
        return y

    def backward(self, grad):
        if self._cache is None:
            raise RuntimeError("backward before forward")
        present, xhat, invstd, n, train = self._cache
        dx = np.zeros_like(grad, dtype=np.float64)
        if n == 0:
            # nothing contributed to the loss; params saw no data this batch
            self.gamma.accumulate(np.zeros(self.dim))
            self.beta.accumulate(np.zeros(self.dim))
            return dx
        gs = grad[present]
        self.gamma.accumulate((gs * xhat).sum(axis=0))
        self.beta.accumulate(gs.sum(axis=0))
        dxhat = gs * self.gamma.value
        if train:
            dx[present] = (
                invstd
                / n
                * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            )
        else:
            dx[present] = dxhat * invstd
        return dx

    def params(self):
        return [self.gamma, self.beta]


def require_some_modality(present_by_modality):
    """Raise MaskExhaustionError for any sample with every modality absent."""
    stack = np.stack(list(present_by_modality), axis=0)
    dead = ~stack.any(axis=0)
    if dead.any():
        idx = int(np.flatnonzero(dead)[0])
        raise MaskExhaustionError(f"sample {idx} has no present modality")
