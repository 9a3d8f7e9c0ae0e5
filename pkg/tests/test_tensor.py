"""Engine tests: forward oracles via nested loops, gradient checks,
optimizer arithmetic, initializer statistics, and graph contracts."""

import numpy as np
import pytest

from histocount import tensor as T
from histocount.optim import Adam, AdamState, adam_step
from histocount.rng import stream
from histocount.tensor import (
    DimensionError,
    GraphError,
    NumericError,
    gradcheck,
)


def conv_oracle(x, k, b, pad):
    """Direct nested-loop cross-correlation."""
    c, h, w = x.shape
    o, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho, wo = h + 2 * pad - kh + 1, w + 2 * pad - kw + 1
    out = np.zeros((o, ho, wo))
    for oc in range(o):
        for i in range(ho):
            for j in range(wo):
                out[oc, i, j] = (xp[:, i : i + kh, j : j + kw] * k[oc]).sum() + b[oc]
    return out


def pool_oracle(x, k):
    c, h, w = x.shape
    out = np.zeros((c, h // k, w // k))
    for ci in range(c):
        for i in range(h // k):
            for j in range(w // k):
                out[ci, i, j] = x[ci, i * k : (i + 1) * k, j * k : (j + 1) * k].max()
    return out


class TestConv2d:
    def test_scaling_identity(self):
        x = T.tensor(np.ones((1, 3, 3)))
        k = T.tensor(np.full((1, 1, 1, 1), 2.0))
        b = T.tensor(np.zeros(1))
        y = T.conv2d(x, k, b, pad=0)
        assert y.shape == (1, 3, 3)
        np.testing.assert_array_equal(y.data, np.full((1, 3, 3), 2.0))

    def test_ones_kernel_neighborhood_sum(self):
        rng = stream(3)
        x = T.tensor(rng.normal(size=(1, 5, 5)))
        k = T.tensor(np.ones((1, 1, 3, 3)))
        b = T.tensor(np.zeros(1))
        y = T.conv2d(x, k, b, pad=1)
        assert y.data[0, 2, 2] == pytest.approx(x.data[0, 1:4, 1:4].sum(), abs=1e-12)
        np.testing.assert_allclose(
            y.data, conv_oracle(x.data, k.data, b.data, 1), atol=1e-12
        )

    def test_zero_kernel_constant_bias(self):
        x = T.tensor(stream(4).normal(size=(2, 4, 4)))
        k = T.tensor(np.zeros((3, 2, 3, 3)))
        b = T.tensor(np.array([1.5, -2.0, 0.25]))
        y = T.conv2d(x, k, b, pad=1)
        for oc in range(3):
            np.testing.assert_array_equal(y.data[oc], np.full((4, 4), b.data[oc]))

    @pytest.mark.parametrize("pad", [0, 1, 2])
    def test_matches_nested_loop_oracle(self, pad):
        rng = stream(10 + pad)
        x = T.tensor(rng.normal(size=(3, 6, 6)))
        k = T.tensor(rng.normal(size=(2, 3, 3, 3)))
        b = T.tensor(rng.normal(size=2))
        y = T.conv2d(x, k, b, pad=pad)
        np.testing.assert_allclose(
            y.data, conv_oracle(x.data, k.data, b.data, pad), atol=1e-12
        )

    def test_batched_matches_per_image(self):
        rng = stream(11)
        xs = rng.normal(size=(4, 2, 5, 5))
        k = T.tensor(rng.normal(size=(3, 2, 3, 3)))
        b = T.tensor(rng.normal(size=3))
        batched = T.conv2d(T.tensor(xs), k, b, pad=1)
        for i in range(4):
            single = T.conv2d(T.tensor(xs[i]), k, b, pad=1)
            np.testing.assert_allclose(batched.data[i], single.data, atol=1e-12)

    def test_shape_mismatch_raises(self):
        x = T.tensor(np.ones((2, 4, 4)))
        k = T.tensor(np.ones((1, 3, 3, 3)))
        with pytest.raises(DimensionError):
            T.conv2d(x, k, T.tensor(np.zeros(1)), pad=0)
        with pytest.raises(DimensionError):
            T.conv2d(x, T.tensor(np.ones((1, 2, 7, 7))), T.tensor(np.zeros(1)), pad=0)

    def test_gradcheck_all_arguments(self):
        rng = stream(12)
        x = T.tensor(rng.normal(size=(2, 5, 5)))
        k = T.tensor(rng.normal(size=(3, 2, 3, 3)))
        b = T.tensor(rng.normal(size=3))

        def sq(t):
            return (t * t).sum()

        assert gradcheck(lambda t: sq(T.conv2d(t, k, b, pad=1)), x) < 1e-4
        assert gradcheck(lambda t: sq(T.conv2d(x, t, b, pad=1)), k) < 1e-4
        assert gradcheck(lambda t: sq(T.conv2d(x, k, t, pad=1)), b) < 1e-4

    @pytest.mark.parametrize("ksize", [(1, 1), (2, 4), (5, 3)])
    def test_odd_kernel_shapes_forward_and_grad(self, ksize):
        kh, kw = ksize
        rng = stream(13 + kh * 7 + kw)
        x = T.tensor(rng.normal(size=(2, 6, 6)))
        k = T.tensor(rng.normal(size=(3, 2, kh, kw)))
        b = T.tensor(rng.normal(size=3))
        y = T.conv2d(x, k, b, pad=2)
        np.testing.assert_allclose(
            y.data, conv_oracle(x.data, k.data, b.data, 2), atol=1e-12
        )

        def sq(t):
            return (t * t).sum()

        assert gradcheck(lambda t: sq(T.conv2d(t, k, b, pad=2)), x) < 1e-4
        assert gradcheck(lambda t: sq(T.conv2d(x, t, b, pad=2)), k) < 1e-4


class TestLeakyRelu:
    def test_elementwise_values(self):
        y = T.leaky_relu(T.tensor(np.array([-1.0, 0.0, 2.0])), 0.1)
        np.testing.assert_allclose(y.data, [-0.1, 0.0, 2.0], atol=1e-15)

    def test_zero_slope_is_relu(self):
        y = T.leaky_relu(T.tensor(np.array([-3.0, 4.0])), 0.0)
        np.testing.assert_array_equal(y.data, [0.0, 4.0])

    def test_gradient_branches(self):
        x = T.parameter(np.array([3.0, -3.0]))
        T.leaky_relu(x, 0.1).sum().backward()
        np.testing.assert_allclose(x.grad, [1.0, 0.1])

    def test_slope_domain(self):
        with pytest.raises(ValueError):
            T.leaky_relu(T.tensor(np.ones(2)), 1.0)


class TestMaxPool:
    def test_two_by_two(self):
        y = T.max_pool2d(T.tensor([[[1.0, 2.0], [3.0, 4.0]]]), 2)
        np.testing.assert_array_equal(y.data, [[[4.0]]])

    def test_constant_input_ties_to_first_cell(self):
        x = T.parameter(np.ones((1, 4, 4)))
        T.max_pool2d(x, 2).sum().backward()
        expected = np.zeros((1, 4, 4))
        expected[0, 0::2, 0::2] = 1.0
        np.testing.assert_array_equal(x.grad, expected)

    def test_matches_window_oracle(self):
        x = stream(21).normal(size=(2, 4, 4))
        y = T.max_pool2d(T.tensor(x), 2)
        np.testing.assert_array_equal(y.data, pool_oracle(x, 2))

    def test_non_divisible_raises(self):
        with pytest.raises(DimensionError):
            T.max_pool2d(T.tensor(np.ones((1, 5, 4))), 2)

    def test_gradcheck(self):
        x = T.tensor(stream(22).normal(size=(2, 4, 4)))
        err = gradcheck(lambda t: (T.max_pool2d(t, 2) * T.max_pool2d(t, 2)).sum(), x)
        assert err < 1e-4


class TestDense:
    def test_identity(self):
        x = T.tensor(np.array([1.0, -2.0, 3.0]))
        y = T.dense(x, T.tensor(np.eye(3)), T.tensor(np.zeros(3)))
        np.testing.assert_array_equal(y.data, x.data)

    def test_row_sum(self):
        y = T.dense(
            T.tensor(np.array([2.0, 3.0])),
            T.tensor(np.array([[1.0, 1.0]])),
            T.tensor(np.zeros(1)),
        )
        np.testing.assert_array_equal(y.data, [5.0])

    def test_matches_matmul_oracle(self):
        rng = stream(31)
        x = rng.normal(size=4)
        w = rng.normal(size=(3, 4))
        b = rng.normal(size=3)
        y = T.dense(T.tensor(x), T.tensor(w), T.tensor(b))
        expected = np.array([w[i] @ x + b[i] for i in range(3)])
        np.testing.assert_allclose(y.data, expected, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            T.dense(T.tensor(np.ones(3)), T.tensor(np.ones((2, 4))), T.tensor(np.ones(2)))


class TestConcat:
    def test_shapes_and_order(self):
        a = T.tensor(np.ones((1, 2, 2)))
        b = T.tensor(np.zeros((1, 2, 2)))
        y = T.concat_channels(a, b)
        assert y.shape == (2, 2, 2)
        np.testing.assert_array_equal(y.data[0], 1.0)
        np.testing.assert_array_equal(y.data[1], 0.0)

    def test_roundtrip_slices(self):
        rng = stream(41)
        a, b = rng.normal(size=(2, 3, 3)), rng.normal(size=(4, 3, 3))
        y = T.concat_channels(T.tensor(a), T.tensor(b))
        np.testing.assert_array_equal(y.data[:2], a)
        np.testing.assert_array_equal(y.data[2:], b)

    def test_gradient_splits_to_ones(self):
        a = T.parameter(np.ones((2, 2, 2)))
        b = T.parameter(np.ones((1, 2, 2)))
        T.concat_channels(a, b).sum().backward()
        np.testing.assert_array_equal(a.grad, np.ones((2, 2, 2)))
        np.testing.assert_array_equal(b.grad, np.ones((1, 2, 2)))

    def test_spatial_mismatch(self):
        with pytest.raises(DimensionError):
            T.concat_channels(T.tensor(np.ones((1, 2, 2))), T.tensor(np.ones((1, 3, 2))))


class TestDropout:
    def test_p_zero_identity(self):
        x = T.tensor(stream(51).normal(size=10))
        y = T.dropout(x, 0.0, True, stream(52))
        np.testing.assert_array_equal(y.data, x.data)

    def test_inference_identity(self):
        x = T.tensor(stream(53).normal(size=10))
        y = T.dropout(x, 0.9, False, stream(54))
        np.testing.assert_array_equal(y.data, x.data)

    def test_keep_rate_monte_carlo(self):
        x = T.tensor(np.ones(1_000_000))
        y = T.dropout(x, 0.5, True, stream(55))
        keep = np.count_nonzero(y.data) / 1e6
        assert abs(keep - 0.5) < 0.005

    def test_survivors_scaled(self):
        x = T.tensor(np.ones(1000))
        y = T.dropout(x, 0.25, True, stream(56))
        kept = y.data[y.data != 0]
        np.testing.assert_allclose(kept, 1.0 / 0.75)

    def test_p_one_rejected(self):
        with pytest.raises(ValueError):
            T.dropout(T.tensor(np.ones(3)), 1.0, True, stream(57))


class TestXavier:
    def test_bound(self):
        t = T.xavier_init((100, 100), 3, 3, stream(61))
        assert np.abs(t.data).max() <= 1.0

    def test_mean_and_variance(self):
        a = np.sqrt(6.0 / 20)
        t = T.xavier_init((100_000,), 10, 10, stream(62))
        assert abs(t.data.mean()) < 0.01 * a
        assert abs(t.data.var() - a * a / 3.0) < 0.05 * a * a / 3.0

    def test_positive_fans_required(self):
        with pytest.raises(ValueError):
            T.xavier_init((2,), 0, 3, stream(63))


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = np.array([1.0, -2.0])
        state = AdamState(lr=0.1)
        adam_step([p], [np.zeros(2)], state)
        np.testing.assert_array_equal(p, [1.0, -2.0])
        assert state.t == 1

    def test_first_step_is_lr_signed(self):
        p = np.array([0.0])
        state = AdamState(lr=1e-3)
        adam_step([p], [np.ones(1)], state)
        assert p[0] == pytest.approx(-1e-3, abs=1e-8)

    def test_sign_symmetry(self):
        p = np.array([0.0])
        adam_step([p], [-np.ones(1)], AdamState(lr=1e-3))
        assert p[0] == pytest.approx(1e-3, abs=1e-8)

    def test_lr_zero_is_identity(self):
        rng = stream(71)
        p = rng.normal(size=8)
        before = p.copy()
        state = AdamState(lr=0.0)
        for _ in range(5):
            adam_step([p], [rng.normal(size=8)], state)
        np.testing.assert_array_equal(p, before)

    def test_nan_gradient_raises(self):
        with pytest.raises(NumericError):
            adam_step([np.zeros(2)], [np.array([np.nan, 0.0])], AdamState())

    def test_wrapper_accumulates(self):
        p = T.parameter(np.zeros(3))
        opt = Adam([p], lr=0.5)
        (p * T.tensor(np.ones(3))).sum().backward()
        opt.step()
        assert (p.data != 0).all()


class TestGradcheckHarness:
    def test_sum_of_squares(self):
        x = T.tensor(stream(81).normal(size=7))
        assert gradcheck(lambda t: (t * t).sum(), x) < 1e-6

    def test_linear_exact(self):
        c = stream(82).normal(size=5)
        x = T.tensor(stream(83).normal(size=5))
        assert gradcheck(lambda t: (t * T.tensor(c)).sum(), x) < 1e-10

    def test_chain_conv_relu_dense(self):
        rng = stream(84)
        k = T.tensor(rng.normal(size=(2, 1, 3, 3)))
        kb = T.tensor(rng.normal(size=2))
        w = T.tensor(rng.normal(size=(3, 2 * 4 * 4)))
        b = T.tensor(rng.normal(size=3))

        def fn(t):
            y = T.leaky_relu(T.conv2d(t, k, kb, pad=1), 0.01)
            y = T.dense(y.flatten(), w, b)
            return (y * y).sum()

        x = T.tensor(rng.normal(size=(1, 4, 4)))
        assert gradcheck(fn, x) < 1e-4

    def test_nan_function_raises(self):
        x = T.tensor(np.array([4.0]))

        def bad(t):
            return (t.log() - t.log() + T.tensor(np.array([np.inf]))) * t

        with pytest.raises(NumericError):
            gradcheck(lambda t: bad(t).sum(), x)


class TestGraphContracts:
    def test_backward_twice_errors(self):
        x = T.parameter(np.ones(3))
        s = (x * x).sum()
        s.backward()
        with pytest.raises(GraphError):
            s.backward()

    def test_backward_needs_scalar(self):
        x = T.parameter(np.ones(3))
        with pytest.raises(GraphError):
            (x * x).backward()

    def test_overflow_is_loud(self):
        with pytest.raises(NumericError):
            T.tensor(np.array([1e308])) * T.tensor(np.array([1e308]))

    def test_grad_accumulates_over_reuse(self):
        x = T.parameter(np.array([3.0]))
        y = x * x + x * T.tensor(np.array([2.0]))
        y.sum().backward()
        np.testing.assert_allclose(x.grad, [8.0])

    def test_seeded_streams_are_bit_identical(self):
        a = stream(99, 1).normal(size=100)
        b = stream(99, 1).normal(size=100)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, stream(99, 2).normal(size=100))
