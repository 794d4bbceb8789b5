import numpy as np
import pytest

from scorepnp import BlurKernel, GmmPrior, GaussianPrior


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, d, scale=0.5):
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T + d * np.eye(d)) / d


def random_gmm(rng, d=2, k=2, spread=2.0):
    w = rng.random(k) + 0.5
    w = w / w.sum()
    w[-1] = 1.0 - w[:-1].sum()  # exact sum 1
    means = spread * rng.standard_normal((k, d))
    covs = np.stack([random_spd(rng, d) for _ in range(k)])
    return GmmPrior(w, means, covs)


@pytest.fixture
def gmm_2d(rng):
    return random_gmm(rng, d=2, k=2)


@pytest.fixture
def gauss_1d():
    return GaussianPrior(mean=np.zeros(1), std=1.0)


@pytest.fixture
def box_kernel():
    return BlurKernel(np.full((3, 3), 1.0 / 9.0))


def direct_periodic_conv(img, kernel):
    """Spatial-domain periodic convolution (true convolution, kernel
    centered), deliberately loop-based."""
    h, w = img.shape[:2]
    kh, kw = kernel.shape
    rc, cc = kh // 2, kw // 2
    out = np.zeros_like(img)
    for i in range(h):
        for j in range(w):
            acc = 0.0 if img.ndim == 2 else np.zeros(img.shape[2])
            for a in range(kh):
                for b in range(kw):
                    acc = acc + kernel[a, b] * img[(i - a + rc) % h, (j - b + cc) % w]
            out[i, j] = acc
    return out


def dense_circulant_matrix(kernel, h, w):
    """n×n matrix of periodic convolution, built tap by tap (no FFT)."""
    n = h * w
    mat = np.zeros((n, n))
    kh, kw = kernel.shape
    rc, cc = kh // 2, kw // 2
    for i in range(h):
        for j in range(w):
            row = i * w + j
            for a in range(kh):
                for b in range(kw):
                    src = ((i - a + rc) % h) * w + ((j - b + cc) % w)
                    mat[row, src] += kernel[a, b]
    return mat
