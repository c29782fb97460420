"""Layer forward/backward against independent loop oracles."""

import numpy as np
import pytest

from biofuse.errors import (
    DimensionError,
    EmptyInputError,
    ParameterError,
)
from biofuse.numcore import (
    Conv1d,
    Conv2d,
    Dense,
    GlobalAvgPool2d,
    MaskedBatchNorm,
    MaxPoolTime,
    Relu,
)


def dense_oracle(x, w, b):
    out = np.zeros((x.shape[0], w.shape[1]))
    for i in range(x.shape[0]):
        for j in range(w.shape[1]):
            acc = b[j]
            for k in range(x.shape[1]):
                acc += x[i, k] * w[k, j]
            out[i, j] = acc
    return out


def conv1d_oracle(x, w, b):
    # each output position c has its own kernel over the padded sample axis
    batch, time, chan = x.shape
    k = w.shape[1]
    pad = k // 2
    xp = np.zeros((batch, time, chan + 2 * pad))
    xp[:, :, pad : pad + chan] = x
    out = np.zeros_like(x)
    for bi in range(batch):
        for t in range(time):
            for c in range(chan):
                acc = b[c]
                for j in range(k):
                    acc += w[c, j] * xp[bi, t, c + j]
                out[bi, t, c] = acc
    return out


def conv2d_oracle(x, w, b, stride):
    batch, c_in, h, wdt = x.shape
    c_out, _, k, _ = w.shape
    pad = k // 2
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wdt + 2 * pad - k) // stride + 1
    xp = np.zeros((batch, c_in, h + 2 * pad, wdt + 2 * pad))
    xp[:, :, pad : pad + h, pad : pad + wdt] = x
    out = np.zeros((batch, c_out, ho, wo))
    for bi in range(batch):
        for co in range(c_out):
            for i in range(ho):
                for j in range(wo):
                    acc = b[co]
                    for ci in range(c_in):
                        for u in range(k):
                            for v in range(k):
                                acc += (
                                    w[co, ci, u, v]
                                    * xp[bi, ci, i * stride + u, j * stride + v]
                                )
                    out[bi, co, i, j] = acc
    return out


class TestDense:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        lay = Dense(5, 4, rng)
        x = rng.normal(size=(3, 5))
        want = dense_oracle(x, lay.weights.value, lay.bias.value)
        assert np.allclose(lay.forward(x), want, atol=1e-12)

    def test_zero_input_gives_bias(self):
        rng = np.random.default_rng(1)
        lay = Dense(4, 3, rng)
        out = lay.forward(np.zeros((2, 4)))
        assert np.allclose(out, np.broadcast_to(lay.bias.value, (2, 3)))

    def test_backward_shapes_and_accumulation(self):
        rng = np.random.default_rng(2)
        lay = Dense(6, 2, rng)
        x = rng.normal(size=(4, 6))
        g = rng.normal(size=(4, 2))
        lay.forward(x)
        dx = lay.backward(g)
        assert dx.shape == x.shape
        first = lay.weights.grad.copy()
        lay.forward(x)
        lay.backward(g)
        # grads accumulate across backward calls
        assert np.allclose(lay.weights.grad, 2 * first)
        assert lay.weights.fresh

    def test_rejects_wrong_width(self):
        lay = Dense(5, 4, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            lay.forward(np.zeros((2, 6)))

    def test_rejects_bad_dims(self):
        with pytest.raises(ParameterError):
            Dense(0, 3, np.random.default_rng(0))


class TestConv1d:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        lay = Conv1d(9, 5, rng)
        lay.bias.value[:] = rng.normal(size=9)
        x = rng.normal(size=(2, 3, 9))
        want = conv1d_oracle(x, lay.weights.value, lay.bias.value)
        assert np.allclose(lay.forward(x), want, atol=1e-12)

    def test_identity_kernel_passes_input_through(self):
        rng = np.random.default_rng(4)
        lay = Conv1d(7, 5, rng)
        lay.weights.value[:] = 0.0
        lay.weights.value[:, 2] = 1.0  # one-hot at the kernel center
        lay.bias.value[:] = 0.0
        x = rng.normal(size=(2, 4, 7))
        assert np.allclose(lay.forward(x), x)

    def test_zero_input_zero_bias_gives_zero(self):
        lay = Conv1d(6, 3, np.random.default_rng(5))
        lay.bias.value[:] = 0.0
        assert np.allclose(lay.forward(np.zeros((1, 2, 6))), 0.0)

    def test_output_shape_equals_input_shape(self):
        lay = Conv1d(300, 7, np.random.default_rng(6))
        x = np.random.default_rng(7).normal(size=(2, 3, 300))
        assert lay.forward(x).shape == x.shape

    def test_timesteps_independent(self):
        # changing one timestep must not disturb the others
        rng = np.random.default_rng(8)
        lay = Conv1d(11, 5, rng)
        x = rng.normal(size=(1, 3, 11))
        base = lay.forward(x)
        x2 = x.copy()
        x2[0, 1] = rng.normal(size=11)
        out = lay.forward(x2)
        assert np.allclose(out[0, 0], base[0, 0])
        assert np.allclose(out[0, 2], base[0, 2])
        assert not np.allclose(out[0, 1], base[0, 1])

    def test_even_kernel_rejected(self):
        with pytest.raises(ParameterError):
            Conv1d(8, 4, np.random.default_rng(0))


class TestConv2d:
    @pytest.mark.parametrize("stride", [1, 2])
    def test_matches_loop_oracle(self, stride):
        rng = np.random.default_rng(9)
        lay = Conv2d(2, 3, 3, stride, rng)
        lay.bias.value[:] = rng.normal(size=3)
        x = rng.normal(size=(2, 2, 6, 5))
        want = conv2d_oracle(x, lay.weights.value, lay.bias.value, stride)
        got = lay.forward(x)
        assert got.shape == want.shape
        assert np.allclose(got, want, atol=1e-12)

    def test_stride_two_halves_even_extent(self):
        lay = Conv2d(1, 1, 3, 2, np.random.default_rng(10))
        out = lay.forward(np.zeros((1, 1, 8, 8)))
        assert out.shape == (1, 1, 4, 4)

    def test_backward_input_gradient_matches_oracle(self):
        # dx[p] = sum over outputs of w * upstream, probed one pixel at a time
        rng = np.random.default_rng(11)
        lay = Conv2d(2, 2, 3, 2, rng)
        x = rng.normal(size=(1, 2, 5, 5))
        g = rng.normal(size=lay.forward(x).shape)
        dx = lay.backward(g)
        eps = 1e-6
        for ci, i, j in [(0, 0, 0), (1, 2, 3), (0, 4, 4), (1, 1, 2)]:
            xp = x.copy()
            xp[0, ci, i, j] += eps
            xm = x.copy()
            xm[0, ci, i, j] -= eps
            num = ((lay.forward(xp) * g).sum() - (lay.forward(xm) * g).sum()) / (2 * eps)
            assert abs(num - dx[0, ci, i, j]) < 1e-6


class TestReluAndPools:
    def test_relu_forward_backward(self):
        x = np.array([[-1.0, 0.0, 2.0]])
        lay = Relu()
        assert np.allclose(lay.forward(x), [[0.0, 0.0, 2.0]])
        g = np.array([[1.0, 1.0, 1.0]])
        # subgradient at 0 is 0
        assert np.allclose(lay.backward(g), [[0.0, 0.0, 1.0]])

    def test_maxpool_matches_loop_oracle(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(3, 5, 4))
        lay = MaxPoolTime()
        got = lay.forward(x)
        for b in range(3):
            for c in range(4):
                assert got[b, c] == max(x[b, t, c] for t in range(5))

    def test_maxpool_tie_routes_to_first(self):
        x = np.zeros((1, 3, 2))
        x[0, 1, 0] = 5.0
        x[0, 2, 0] = 5.0  # tie: index 1 wins
        lay = MaxPoolTime()
        lay.forward(x)
        dx = lay.backward(np.ones((1, 2)))
        assert dx[0, 1, 0] == 1.0
        assert dx[0, 2, 0] == 0.0

    def test_maxpool_empty_time_axis(self):
        with pytest.raises(EmptyInputError):
            MaxPoolTime().forward(np.zeros((2, 0, 4)))

    def test_gap_forward_backward(self):
        x = np.arange(8.0).reshape(1, 2, 2, 2)
        lay = GlobalAvgPool2d()
        out = lay.forward(x)
        assert np.allclose(out, [[1.5, 5.5]])
        dx = lay.backward(np.array([[4.0, 8.0]]))
        assert np.allclose(dx[0, 0], 1.0)
        assert np.allclose(dx[0, 1], 2.0)


class TestMaskedBatchNorm:
    def plain_bn_oracle(self, x, gamma, beta, eps):
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        return gamma * (x - mean) / np.sqrt(var + eps) + beta

    def test_present_rows_match_subbatch_bitwise(self):
        rng = np.random.default_rng(13)
        bn = MaskedBatchNorm(4)
        bn.gamma.value[:] = rng.normal(size=4)
        bn.beta.value[:] = rng.normal(size=4)
        x = rng.normal(size=(6, 4))
        present = np.array([True, False, True, True, False, True])

        full = bn.forward(x, present, train=True)

        bn2 = MaskedBatchNorm(4)
        bn2.gamma.value[:] = bn.gamma.value
        bn2.beta.value[:] = bn.beta.value
        sub = bn2.forward(x[present], np.ones(4, bool), train=True)

        # bitwise: same rows, same summation order
        assert (full[present] == sub).all()
        assert (full[~present] == 0.0).all()

    def test_matches_plain_formula(self):
        rng = np.random.default_rng(14)
        bn = MaskedBatchNorm(3)
        x = rng.normal(size=(5, 3))
        out = bn.forward(x, np.ones(5, bool), train=True)
        want = self.plain_bn_oracle(x, bn.gamma.value, bn.beta.value, bn.epsilon)
        assert np.allclose(out, want, atol=1e-12)

    def test_running_stats_update(self):
        rng = np.random.default_rng(15)
        bn = MaskedBatchNorm(2, momentum=0.25)
        x = rng.normal(size=(8, 2))
        bn.forward(x, np.ones(8, bool), train=True)
        assert np.allclose(bn.running_mean, 0.25 * x.mean(axis=0))
        assert np.allclose(bn.running_var, 0.75 * 1.0 + 0.25 * x.var(axis=0))

    def test_eval_uses_running_stats(self):
        bn = MaskedBatchNorm(2)
        bn.running_mean[:] = [1.0, -1.0]
        bn.running_var[:] = [4.0, 0.25]
        x = np.array([[3.0, 0.0]])
        out = bn.forward(x, np.ones(1, bool), train=False)
        want = (x - bn.running_mean) / np.sqrt(bn.running_var + bn.epsilon)
        assert np.allclose(out, want)

    def test_no_present_rows_is_noop(self):
        bn = MaskedBatchNorm(3)
        rm = bn.running_mean.copy()
        out = bn.forward(np.ones((4, 3)), np.zeros(4, bool), train=True)
        assert (out == 0.0).all()
        assert (bn.running_mean == rm).all()
        dx = bn.backward(np.ones((4, 3)))
        assert (dx == 0.0).all()

    def test_absent_rows_get_zero_gradient(self):
        rng = np.random.default_rng(16)
        bn = MaskedBatchNorm(3)
        x = rng.normal(size=(5, 3))
        present = np.array([True, True, False, True, False])
        bn.forward(x, present, train=True)
        dx = bn.backward(rng.normal(size=(5, 3)))
        assert (dx[~present] == 0.0).all()
        assert np.abs(dx[present]).sum() > 0
