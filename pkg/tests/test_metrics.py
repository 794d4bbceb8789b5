import numpy as np
import pytest

from scorepnp import DimensionError, ParameterError, psnr, ssim


class TestPsnr:
    def test_identical_images_hit_sentinel(self, rng):
        x = rng.random((16, 16, 1))
        assert psnr(x, x) == 99.0

    def test_direct_formula(self):
        x = np.zeros((10, 10, 1))
        ref = np.full((10, 10, 1), 0.1)  # MSE = 0.01
        assert psnr(x, ref, max_val=1.0) == pytest.approx(20.0)

    def test_max_val_scaling(self):
        x = np.zeros((10, 10, 1))
        ref = np.full((10, 10, 1), 25.5)
        assert psnr(x, ref, max_val=255.0) == pytest.approx(20.0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            psnr(np.zeros((4, 4, 1)), np.zeros((5, 5, 1)))

    def test_rejects_bad_max_val(self):
        with pytest.raises(ParameterError):
            psnr(np.zeros((4, 4)), np.zeros((4, 4)), max_val=0.0)


class TestSsim:
    def test_identical_images_give_one(self, rng):
        x = rng.random((32, 32, 1))
        assert ssim(x, x) == pytest.approx(1.0)

    def test_independent_noise_near_zero(self, rng):
        for _ in range(5):
            a = rng.random((64, 64, 1))
            b = rng.random((64, 64, 1))
            assert abs(ssim(a, b)) <= 0.1

    def test_matches_reference_implementation(self, rng):
        skimage = pytest.importorskip("skimage.metrics")
        for _ in range(10):
            base = rng.random((40, 40))
            noisy = np.clip(base + 0.1 * rng.standard_normal((40, 40)), 0, 1)
            got = ssim(base, noisy)
            want = skimage.structural_similarity(
                base, noisy, win_size=11, gaussian_weights=True, sigma=1.5,
                use_sample_covariance=False, data_range=1.0)
            assert got == pytest.approx(want, abs=1e-4)

    def test_color_is_channel_average(self, rng):
        a = rng.random((24, 24, 3))
        b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 1)
        per_chan = [ssim(a[:, :, c], b[:, :, c]) for c in range(3)]
        assert ssim(a, b) == pytest.approx(np.mean(per_chan), abs=1e-12)

    def test_too_small_image_rejected(self):
        with pytest.raises(ParameterError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))
