import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acmixlab.shifting import (
    ShiftKernelBank,
    ShiftSpec,
    depthwise_conv,
    shift,
    shift_kernel,
    shift_sum_group_conv,
    shift_via_depthwise,
)
from acmixlab.tensor import ShapeError


class TestShift:
    def test_identity_displacement(self, rng):
        f = rng.standard_normal((1, 2, 5, 5))
        assert np.array_equal(shift(f, (0, 0)), f)

    def test_impulse_moves_against_displacement(self):
        f = np.zeros((1, 1, 5, 5))
        f[0, 0, 2, 2] = 1.0
        out = shift(f, (-1, -1))
        # out[i, j] reads in[i-1, j-1], so the impulse lands at (3, 3)
        assert out[0, 0, 3, 3] == 1.0
        assert out.sum() == 1.0

    def test_vacated_positions_zero(self, rng):
        f = rng.standard_normal((1, 1, 4, 4))
        out = shift(f, (2, 0))
        assert np.all(out[0, 0, 2:] == 0.0)
        assert np.array_equal(out[0, 0, :2], f[0, 0, 2:])

    @given(
        st.integers(-3, 3), st.integers(-3, 3), st.integers(-3, 3), st.integers(-3, 3)
    )
    def test_composition_on_interior(self, a, b, c, d):
        rng = np.random.default_rng(7)
        f = rng.standard_normal((1, 1, 8, 8))
        two_step = shift(shift(f, (a, b)), (c, d))
        one_step = shift(f, (a + c, b + d))
        # compare only where neither route read zero fill
        idx = np.arange(8)
        rows = (0 <= idx + c) & (idx + c < 8) & (0 <= idx + a + c) & (idx + a + c < 8)
        cols = (0 <= idx + d) & (idx + d < 8) & (0 <= idx + b + d) & (idx + b + d < 8)
        region = np.outer(rows, cols)
        assert np.array_equal(two_step[0, 0][region], one_step[0, 0][region])

    def test_out_of_range_displacement_rejected(self, rng):
        with pytest.raises(ValueError):
            shift(rng.standard_normal((1, 1, 4, 4)), (4, 0))

    def test_non_integer_rejected(self):
        with pytest.raises(TypeError):
            ShiftSpec(0.5, 0)


class TestShiftViaDepthwise:
    def test_kernel_pattern_top_left(self):
        kern = shift_kernel((-1, -1), 3)
        expected = np.zeros((3, 3))
        expected[0, 0] = 1.0
        assert np.array_equal(kern, expected)

    def test_kernel_pattern_center(self):
        kern = shift_kernel((0, 0), 3)
        assert kern[1, 1] == 1.0 and kern.sum() == 1.0

    def test_identity_shift(self, rng):
        f = rng.standard_normal((2, 3, 6, 6))
        assert np.array_equal(shift_via_depthwise(f, (0, 0), 3), f)

    @pytest.mark.parametrize("k", [3, 5])
    def test_all_displacements_match_shift_exactly(self, k, rng):
        f = rng.standard_normal((2, 5, 9, 9))
        m = k // 2
        for dx in range(-m, m + 1):
            for dy in range(-m, m + 1):
                got = shift_via_depthwise(f, (dx, dy), k)
                want = shift(f, (dx, dy))
                assert np.array_equal(got, want), (dx, dy)

    def test_reach_exceeded_rejected(self, rng):
        with pytest.raises(ValueError):
            shift_via_depthwise(rng.standard_normal((1, 1, 6, 6)), (2, 0), 3)

    def test_depthwise_kernel_count_guard(self, rng):
        with pytest.raises(ShapeError):
            depthwise_conv(rng.standard_normal((1, 3, 4, 4)), np.zeros((2, 3, 3)))


class TestShiftKernelBank:
    def test_fixed_bank_is_one_hot(self):
        bank = ShiftKernelBank.fixed(3, 4)
        assert bank.kernels.shape == (36, 1, 3, 3)
        for g in range(bank.groups):
            kerns = bank.group_kernels(g)
            assert np.all(kerns.sum(axis=(1, 2)) == 1.0)
            assert np.all((kerns == 0.0) | (kerns == 1.0))
            dx, dy = bank.displacement(g)
            assert kerns[0, dx + 1, dy + 1] == 1.0
        assert bank.is_one_hot()

    def test_learnable_init_matches_fixed_values(self):
        fixed = ShiftKernelBank.fixed(5, 2)
        learnable = ShiftKernelBank.learnable_init(5, 2)
        assert np.array_equal(fixed.kernels, learnable.kernels)
        assert learnable.learnable and not fixed.learnable

    def test_shape_guard(self):
        with pytest.raises(ShapeError):
            ShiftKernelBank(np.zeros((5, 1, 3, 3)), 3, 4)


class TestShiftSumGroupConv:
    def test_zero_features(self):
        bank = ShiftKernelBank.fixed(3, 2)
        maps = [np.zeros((1, 2, 4, 4)) for _ in range(9)]
        assert np.array_equal(shift_sum_group_conv(maps, bank), np.zeros((1, 2, 4, 4)))

    def test_center_feature_passthrough(self, rng):
        bank = ShiftKernelBank.fixed(3, 2)
        maps = [np.zeros((1, 2, 4, 4)) for _ in range(9)]
        center = rng.standard_normal((1, 2, 4, 4))
        maps[4] = center  # group 4 == tap (1, 1) == zero displacement
        assert np.array_equal(shift_sum_group_conv(maps, bank), center)

    @pytest.mark.parametrize("k,c", [(3, 4), (5, 2)])
    def test_matches_explicit_shift_and_sum(self, k, c, rng):
        bank = ShiftKernelBank.fixed(k, c)
        maps = [rng.standard_normal((2, c, 8, 8)) for _ in range(k * k)]
        grouped = shift_sum_group_conv(maps, bank)
        explicit = np.zeros_like(maps[0])
        for g, fmap in enumerate(maps):
            explicit += shift(fmap, bank.displacement(g))
        assert np.max(np.abs(grouped - explicit)) <= 1e-10

    def test_learnable_bank_never_updated_is_bit_identical(self, rng):
        maps = [rng.standard_normal((1, 3, 6, 6)) for _ in range(9)]
        fixed_out = shift_sum_group_conv(maps, ShiftKernelBank.fixed(3, 3))
        learnable_out = shift_sum_group_conv(maps, ShiftKernelBank.learnable_init(3, 3))
        assert np.array_equal(fixed_out, learnable_out)

    def test_wrong_count_rejected(self, rng):
        bank = ShiftKernelBank.fixed(3, 2)
        with pytest.raises(ShapeError):
            shift_sum_group_conv([rng.standard_normal((1, 2, 4, 4))] * 8, bank)

    def test_mismatched_shapes_rejected(self, rng):
        bank = ShiftKernelBank.fixed(3, 2)
        maps = [rng.standard_normal((1, 2, 4, 4)) for _ in range(9)]
        maps[3] = rng.standard_normal((1, 2, 5, 5))
        with pytest.raises(ShapeError):
            shift_sum_group_conv(maps, bank)

    def test_channel_mismatch_rejected(self, rng):
        bank = ShiftKernelBank.fixed(3, 2)
        maps = [rng.standard_normal((1, 3, 4, 4)) for _ in range(9)]
        with pytest.raises(ShapeError):
            shift_sum_group_conv(maps, bank)
