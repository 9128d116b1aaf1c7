import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acmixlab.tensor import (
    ConvKernel,
    ShapeError,
    conv2d_reference,
    finite_difference_grad,
    pointwise_conv,
    softmax_over_set,
)


def direct_convolution(feature, weights):
    """Independent oracle: scalar accumulation, taps row-major, channels
    ascending, skipping out-of-bounds reads."""
    b, c_in, h, w = feature.shape
    c_out, _, k, _ = weights.shape
    m = k // 2
    out = np.zeros((b, c_out, h, w))
    for bb in range(b):
        for o in range(c_out):
            for i in range(h):
                for j in range(w):
                    acc = 0.0
                    for p in range(k):
                        for q in range(k):
                            ii, jj = i + p - m, j + q - m
                            if 0 <= ii < h and 0 <= jj < w:
                                for c in range(c_in):
                                    acc += weights[o, c, p, q] * feature[bb, c, ii, jj]
                    out[bb, o, i, j] = acc
    return out


class TestConvReference:
    def test_identity_1x1_kernel(self, rng):
        f = rng.standard_normal((2, 3, 5, 5))
        kern = ConvKernel(np.eye(3).reshape(3, 3, 1, 1))
        assert np.array_equal(conv2d_reference(f, kern), f)

    def test_ones_kernel_constant_input(self):
        f = np.ones((1, 1, 6, 6))
        out = conv2d_reference(f, ConvKernel(np.ones((1, 1, 3, 3))))
        assert out[0, 0, 3, 3] == 9.0  # interior
        assert out[0, 0, 0, 0] == 4.0  # corner
        assert out[0, 0, 0, 3] == 6.0  # edge

    def test_matches_independent_direct_loop_bitwise(self, rng):
        f = rng.standard_normal((2, 4, 8, 8))
        w = rng.standard_normal((6, 4, 3, 3))
        assert np.array_equal(conv2d_reference(f, ConvKernel(w)), direct_convolution(f, w))

    def test_linear_in_input(self, rng):
        f1 = rng.standard_normal((1, 3, 6, 6))
        f2 = rng.standard_normal((1, 3, 6, 6))
        kern = ConvKernel(rng.standard_normal((4, 3, 3, 3)))
        a, b = 2.5, -1.25
        mixed = conv2d_reference(a * f1 + b * f2, kern)
        split = a * conv2d_reference(f1, kern) + b * conv2d_reference(f2, kern)
        scale = np.max(np.abs(split)) + 1e-30
        assert np.max(np.abs(mixed - split)) / scale < 1e-12

    def test_linear_in_kernel(self, rng):
        f = rng.standard_normal((1, 3, 6, 6))
        w1 = rng.standard_normal((4, 3, 3, 3))
        w2 = rng.standard_normal((4, 3, 3, 3))
        mixed = conv2d_reference(f, ConvKernel(0.5 * w1 + 2.0 * w2))
        split = 0.5 * conv2d_reference(f, ConvKernel(w1)) + 2.0 * conv2d_reference(
            f, ConvKernel(w2)
        )
        scale = np.max(np.abs(split)) + 1e-30
        assert np.max(np.abs(mixed - split)) / scale < 1e-12

    def test_channel_mismatch_rejected(self, rng):
        f = rng.standard_normal((1, 3, 4, 4))
        with pytest.raises(ShapeError):
            conv2d_reference(f, ConvKernel(rng.standard_normal((2, 5, 3, 3))))

    def test_even_kernel_rejected(self):
        with pytest.raises(ShapeError):
            ConvKernel(np.zeros((1, 1, 2, 2)))

    def test_rank_guard(self):
        with pytest.raises(ShapeError):
            conv2d_reference(np.zeros((3, 4, 4)), ConvKernel(np.zeros((1, 3, 1, 1))))


class TestPointwise:
    def test_identity(self, rng):
        f = rng.standard_normal((2, 4, 5, 5))
        assert np.array_equal(pointwise_conv(f, np.eye(4)), f)

    def test_zero_weight(self, rng):
        f = rng.standard_normal((2, 4, 5, 5))
        assert np.array_equal(pointwise_conv(f, np.zeros((3, 4))), np.zeros((2, 3, 5, 5)))

    def test_equals_reference_with_1x1_kernel(self, rng):
        f = rng.standard_normal((2, 4, 6, 6))
        w = rng.standard_normal((5, 4))
        as_kernel = ConvKernel(w.reshape(5, 4, 1, 1))
        assert np.array_equal(pointwise_conv(f, w), conv2d_reference(f, as_kernel))

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ShapeError):
            pointwise_conv(rng.standard_normal((1, 4, 3, 3)), np.zeros((2, 3)))


class TestSoftmax:
    def test_uniform_logits(self):
        np.testing.assert_allclose(softmax_over_set([0.0, 0.0, 0.0]), np.full(3, 1 / 3), rtol=1e-15)

    @pytest.mark.parametrize("x", [-1e6, 0.0, 3.5, 1e6])
    def test_singleton(self, x):
        assert softmax_over_set([x]) == pytest.approx([1.0], abs=0)

    def test_extreme_logits_no_overflow(self):
        got = softmax_over_set([1000.0, 0.0])
        # extended-precision evaluation of the same expression
        z = np.array([1000.0, 0.0], dtype=np.longdouble)
        e = np.exp(z - z.max())
        expected = (e / e.sum()).astype(np.float64)
        assert np.all(np.isfinite(got))
        assert np.max(np.abs(got - expected)) <= 1e-12

    @given(st.lists(st.floats(min_value=-1e8, max_value=1e8), min_size=1, max_size=64))
    def test_sums_to_one(self, logits):
        w = softmax_over_set(logits)
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-12

    def test_sums_to_one_long_vector(self, rng):
        w = softmax_over_set(rng.standard_normal(10_000) * 100.0)
        assert abs(w.sum() - 1.0) <= 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            softmax_over_set([])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            softmax_over_set([1.0, np.inf])


class TestFiniteDifference:
    def test_gradient_of_sum_is_ones(self, rng):
        x = rng.standard_normal((2, 2, 3, 3))
        g = finite_difference_grad(lambda t: float(np.sum(t)), x, 1e-5)
        np.testing.assert_allclose(g, np.ones_like(x), atol=1e-9)

    def test_quadratic_recovers_point(self, rng):
        eps = 1e-5
        x = rng.standard_normal((3, 4)) + 2.0
        g = finite_difference_grad(lambda t: 0.5 * float(np.sum(t * t)), x, eps)
        rel = np.max(np.abs(g - x)) / np.max(np.abs(x))
        assert rel <= 10 * eps**2

    def test_scalar_point(self):
        g = finite_difference_grad(lambda t: float(t) ** 3, np.array(2.0), 1e-5)
        assert g.shape == ()
        assert g == pytest.approx(12.0, rel=1e-8)

    def test_matches_analytic_conv_kernel_gradient(self, rng):
        # d/dK sum(conv(F, K)) has the closed form sum of padded input windows
        f = rng.standard_normal((2, 3, 6, 6))
        w = rng.standard_normal((2, 3, 3, 3))
        padded = np.pad(f, ((0, 0), (0, 0), (1, 1), (1, 1)))
        analytic = np.zeros_like(w)
        for p in range(3):
            for q in range(3):
                window = padded[:, :, p : p + 6, q : q + 6]
                analytic[:, :, p, q] = window.sum(axis=(0, 2, 3))[None, :]

        def objective(kw):
            return float(np.sum(conv2d_reference(f, ConvKernel(kw))))

        numeric = finite_difference_grad(objective, w, 1e-5)
        rel = np.max(np.abs(numeric - analytic)) / np.max(np.abs(analytic))
        assert rel <= 1e-6

    def test_nonfinite_function_reports_coordinate(self):
        def bad(t):
            return float("nan")

        with pytest.raises(ValueError, match="coordinate"):
            finite_difference_grad(bad, np.zeros((2, 2)), 1e-5)

    def test_epsilon_guard(self):
        with pytest.raises(ValueError):
            finite_difference_grad(lambda t: 0.0, np.zeros(2), 0.0)
