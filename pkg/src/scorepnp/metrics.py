"""Image quality metrics: PSNR and SSIM.

SSIM uses the standard constants K1 = 0.01, K2 = 0.03, an 11-tap Gaussian
window with σ = 1.5, population (not sample) local statistics, dynamic
range 1, and averages the local index over valid window positions only.
Color images are scored per channel and averaged.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import DimensionError, ParameterError

logger = logging.getLogger(__name__)

PSNR_CAP_DB = 99.0

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _pair(x, ref) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(getattr(x, "array", x), dtype=np.float64)
    b = np.asarray(getattr(ref, "array", ref), dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(x, ref, max_val: float = 1.0) -> float:
    """10·log10(max_val²/MSE); MSE == 0 returns the 99 dB sentinel."""
    if max_val <= 0:
        raise ParameterError(f"max_val must be positive, got {max_val}")
    a, b = _pair(x, ref)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        logger.info("psnr: zero MSE, returning %.0f dB sentinel", PSNR_CAP_DB)
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(max_val * max_val / mse), PSNR_CAP_DB))


def _gaussian_taps(size: int, sigma: float) -> np.ndarray:
    r = size // 2
    d = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable 2-D correlation, 'valid' output region."""
    n = taps.size
    h, w = img.shape
    # rows
    tmp = np.zeros((h, w - n + 1))
    for i, t in enumerate(taps):
        tmp += t * img[:, i : i + w - n + 1]
    out = np.zeros((h - n + 1, tmp.shape[1]))
    for i, t in enumerate(taps):
        out += t * tmp[i : i + h - n + 1, :]
    return out


def _ssim_channel(a: np.ndarray, b: np.ndarray, c1: float, c2: float,
                  taps: np.ndarray) -> float:
    mu_a = _filter_valid(a, taps)
    mu_b = _filter_valid(b, taps)
    e_aa = _filter_valid(a * a, taps)
    e_bb = _filter_valid(b * b, taps)
    e_ab = _filter_valid(a * b, taps)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(x, ref, max_val: float = 1.0) -> float:
    """Mean local SSIM over valid window positions, channel-averaged."""
    a, b = _pair(x, ref)
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    if a.ndim != 3:
        raise DimensionError(f"expected HxW or HxWxC, got shape {a.shape}")
    h, w = a.shape[:2]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ParameterError(
            f"image {h}x{w} smaller than the {SSIM_WINDOW}-tap SSIM window"
        )
    c1 = (SSIM_K1 * max_val) ** 2
    c2 = (SSIM_K2 * max_val) ** 2
    taps = _gaussian_taps(SSIM_WINDOW, SSIM_SIGMA)
    vals = [_ssim_channel(a[:, :, c], b[:, :, c], c1, c2, taps)
            for c in range(a.shape[2])]
    return float(np.mean(vals))
