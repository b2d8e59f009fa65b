import numpy as np
import pytest

from thinseg import autodiff as ad
from thinseg.morphology import (
    DiffusionConfig,
    SkeletonConfig,
    decrease_dilate,
    hard_skeleton,
    smooth_diffuse,
    soft_dilate,
    soft_erode,
    soft_skeleton,
)


def const(arr):
    return ad.Tape().constant(np.asarray(arr, dtype=float))


def leaf(arr):
    tape = ad.Tape()
    return tape.leaf(np.asarray(arr, dtype=float))


class TestDilateErode:
    def test_point_dilates_to_plus(self):
        f = np.zeros((5, 5))
        f[2, 2] = 1.0
        out = soft_dilate(const(f), 1).value
        assert (out > 0).sum() == 5
        assert out[2, 2] == out[1, 2] == out[2, 1] == 1.0
        assert out[1, 1] == 0.0  # corner removed

    def test_point_dilates_to_diamond_r2(self):
        f = np.zeros((7, 7))
        f[3, 3] = 1.0
        out = soft_dilate(const(f), 2).value
        assert (out > 0).sum() == 13

    def test_dilate_zeros_is_zeros(self):
        np.testing.assert_array_equal(soft_dilate(const(np.zeros((4, 4)))).value, 0.0)

    def test_erode_all_ones_is_all_ones(self):
        np.testing.assert_array_equal(soft_erode(const(np.ones((4, 5)))).value, 1.0)

    def test_erode_inverts_point_dilation(self):
        f = np.zeros((5, 5))
        f[2, 2] = 1.0
        plus = soft_dilate(const(f), 1)
        back = soft_erode(plus, 1).value
        np.testing.assert_array_equal(back, f)

    def test_opening_preserves_interior_of_plus(self):
        f = np.zeros((7, 7))
        f[3, 3] = 1.0
        opened = soft_dilate(soft_erode(soft_dilate(const(f), 1), 1), 1).value
        assert opened[3, 3] == 1.0

    def test_radius_validation(self):
        with pytest.raises(ValueError):
            soft_dilate(const(np.ones((3, 3))), 0)

    def test_extensive_and_monotone(self):
        rng = np.random.default_rng(0)
        a = rng.random((8, 8))
        b = np.clip(a - rng.random((8, 8)) * 0.3, 0, 1)
        da = soft_dilate(const(a)).value
        db = soft_dilate(const(b)).value
        assert (da >= a).all()
        assert (da >= db).all()
        ea = soft_erode(const(a)).value
        eb = soft_erode(const(b)).value
        assert (ea <= a).all()
        assert (ea >= eb).all()


class TestSoftSkeleton:
    def test_width1_line_is_its_own_skeleton(self):
        line = np.zeros((9, 12))
        line[4, 2:10] = 1.0
        out = soft_skeleton(const(line), SkeletonConfig(10)).value
        np.testing.assert_array_equal(out, line)

    def test_width3_bar_thins_to_centerline(self):
        bar = np.zeros((16, 11))
        bar[:, 4:7] = 1.0
        out = soft_skeleton(const(bar), SkeletonConfig(5)).value
        expected = np.zeros((16, 11))
        expected[:, 5] = 1.0
        np.testing.assert_array_equal(out, expected)

    def test_filled_square_concentrates(self):
        square = np.zeros((13, 13))
        square[2:11, 2:11] = 1.0
        out = soft_skeleton(const(square), SkeletonConfig(6)).value
        count = (out > 0).sum()
        assert count < 0.25 * 81
        # residues accumulate along the diagonals of the nested erosions
        assert out[6, 6] > 0

    def test_iterations_validated(self):
        with pytest.raises(ValueError):
            SkeletonConfig(0)


class TestHardSkeleton:
    def test_matches_soft_on_binary(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            mask = (rng.random((14, 14)) < 0.35).astype(np.uint8)
            soft = soft_skeleton(const(mask.astype(float)), SkeletonConfig(8)).value
            hard = hard_skeleton(mask)
            np.testing.assert_array_equal(hard, soft.astype(np.uint8))

    def test_empty_in_empty_out(self):
        assert hard_skeleton(np.zeros((5, 5), dtype=np.uint8)).sum() == 0

    def test_nonempty_mask_has_nonempty_skeleton(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            mask = np.zeros((10, 10), dtype=np.uint8)
            mask[tuple(rng.integers(0, 10, 2))] = 1
            mask[tuple(rng.integers(0, 10, 2))] = 1
            assert hard_skeleton(mask).sum() > 0


class TestSmoothDiffuse:
    def test_support_stays_exactly_one(self):
        f = np.zeros((31, 31))
        f[15, 10:20] = 1.0
        out = smooth_diffuse(const(f), DiffusionConfig()).value
        np.testing.assert_array_equal(out[15, 10:20], 1.0)

    def test_first_ring_after_one_iteration(self):
        f = np.zeros((9, 9))
        f[4, 4] = 1.0
        cfg = DiffusionConfig(s_border=1, n_iter_max=50, f=0.82)
        out = smooth_diffuse(const(f), cfg).value
        assert out[4, 4] == 1.0
        assert out[4, 5] == pytest.approx(1.0 - 0.82, abs=1e-12)
        assert out[3, 3] == 0.0

    def test_monotone_along_rings(self):
        f = np.zeros((51, 51))
        f[25, 25] = 1.0
        out = smooth_diffuse(const(f), DiffusionConfig()).value
        values = out[25, 25:]
        assert (np.diff(values) <= 0).all()
        assert values[20] > 0.0  # halo reaches s_border
        assert values[21] == 0.0

    def test_output_in_unit_interval(self):
        rng = np.random.default_rng(1)
        f = rng.random((20, 20))
        out = smooth_diffuse(const(f), DiffusionConfig(s_border=5)).value
        assert out.min() >= 0.0
        assert out.max() <= 1.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DiffusionConfig(s_border=0)
        with pytest.raises(ValueError):
            DiffusionConfig(f=1.0)
        with pytest.raises(ValueError):
            DiffusionConfig(n_iter_max=0)


class TestDecreaseDilate:
    def test_all_zeros_fixpoint(self):
        np.testing.assert_array_equal(decrease_dilate(np.zeros((4, 4))), 0.0)

    def test_value3_diamond(self):
        f = np.zeros((9, 9))
        f[4, 4] = 3.0
        out = decrease_dilate(f)
        assert out[4, 4] == 3.0
        assert out[4, 5] == out[3, 4] == 2.0
        assert out[4, 6] == out[2, 4] == 1.0
        assert out[4, 7] == 0.0
        assert (out > 0).sum() == 13  # L1 ball of radius 2

    def test_value1_stays_point(self):
        f = np.zeros((5, 5))
        f[2, 2] = 1.0
        out = decrease_dilate(f)
        np.testing.assert_array_equal(out, f)

    def test_fixpoint_within_max_value_iterations(self):
        rng = np.random.default_rng(4)
        f = np.zeros((20, 20))
        f[rng.random((20, 20)) < 0.05] = rng.integers(1, 6)
        out = decrease_dilate(f)
        # applying one more round changes nothing
        np.testing.assert_array_equal(decrease_dilate(out), out)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            decrease_dilate(np.array([[-1.0]]))


class TestMorphologyGradients:
    def fd(self, fn, x, h=1e-6):
        g = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            xp = x.copy()
            xp[idx] += h
            xm = x.copy()
            xm[idx] -= h
            g[idx] = (fn(xp) - fn(xm)) / (2 * h)
        return g

    @pytest.mark.parametrize("seed", range(5))
    def test_skeleton_and_diffusion_gradients(self, seed):
        rng = np.random.default_rng(seed)
        values = rng.permutation(np.linspace(0.02, 0.98, 64)).reshape(8, 8)
        weights = rng.random((8, 8))
        cfg_s = SkeletonConfig(3)
        cfg_d = DiffusionConfig(s_border=3, n_iter_max=3, f=0.82)

        def forward(arr):
            tape = ad.Tape()
            x = tape.leaf(arr)
            out = smooth_diffuse(soft_skeleton(x, cfg_s), cfg_d)
            return float(ad.vsum(out * tape.constant(weights)).value)

        tape = ad.Tape()
        x = tape.leaf(values)
        out = smooth_diffuse(soft_skeleton(x, cfg_s), cfg_d)
        ad.backward(ad.vsum(out * tape.constant(weights)))
        numeric = self.fd(forward, values)
        np.testing.assert_allclose(x.grad, numeric, rtol=1e-3, atol=1e-6)
