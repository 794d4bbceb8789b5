"""Image containers, linear measurement operators, and measurement synthesis.

State convention: images are float64 arrays of shape (H, W, C) with C in
{1, 3} and nominal pixel range [0, 1].  Solver state is never clamped; the
[0, 1] clip happens only in `save_image`.

Blur operators use periodic (circular) boundary handling so that A and
AᵀA diagonalize in the 2-D Fourier domain; the cached transfer spectrum is
what makes the quadratic-data-term prox exact and cheap.

Randomness: Gaussian noise comes from ``numpy.random.Generator`` seeded
with PCG64, i.e. ``np.random.default_rng(seed).standard_normal(...)`` (the
ziggurat method).  Identical seed gives bit-identical measurements.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParameterError

logger = logging.getLogger(__name__)

KERNEL_SUM_WARN_TOL = 1e-6


# ---------------------------------------------------------------------------
# Containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImageTensor:
    """H×W×C image with float64 pixels, nominally in [0, 1]."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise DimensionError(f"image must be HxW or HxWxC, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise DimensionError(f"channel count must be 1 or 3, got {arr.shape[2]}")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("image contains non-finite values")
        object.__setattr__(self, "array", arr)

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def channels(self) -> int:
        return self.array.shape[2]

    @property
    def data(self) -> np.ndarray:
        """Flat copy, row-major per channel (channel planes concatenated)."""
        return np.ascontiguousarray(self.array.transpose(2, 0, 1)).ravel().copy()

    def shape3(self) -> tuple[int, int, int]:
        return self.array.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class BlurKernel:
    """2-D convolution kernel with odd dimensions.

    Raw weights are kept as loaded; `raw_sum` records their sum.
    Normalization to sum 1 is an explicit step (`normalized`), never silent.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionError("kernel must be 2-D")
        kh, kw = w.shape
        if kh % 2 == 0 or kw % 2 == 0 or kh < 1 or kw < 1:
            raise ParameterError(f"kernel dims must be odd and positive, got {kh}x{kw}")
        if not np.all(np.isfinite(w)):
            raise ParameterError("kernel contains non-finite weights")
        object.__setattr__(self, "weights", w)

    @property
    def kh(self) -> int:
        return self.weights.shape[0]

    @property
    def kw(self) -> int:
        return self.weights.shape[1]

    @property
    def raw_sum(self) -> float:
        return float(self.weights.sum())

    def normalized(self) -> "BlurKernel":
        """Return a sum-1 copy; warns if the raw sum was off by > 1e-6."""
        s = self.raw_sum
        if s == 0.0:
            raise ParameterError("kernel weights sum to zero; cannot normalize")
        if abs(s - 1.0) > KERNEL_SUM_WARN_TOL:
            logger.warning("kernel sum %.8g != 1; normalizing", s)
        return BlurKernel(self.weights / s)


@dataclass(frozen=True)
class Measurement:
    """Noisy measurement y = A x + e with its generation metadata."""

    y: ImageTensor
    noise_sigma: float
    seed: int


# ---------------------------------------------------------------------------
# Linear operators
# ---------------------------------------------------------------------------


class LinearOperator:
    """Forward/adjoint pair A, Aᵀ acting channel-wise on (H, W, C) arrays.

    Subclasses are immutable after construction and safe for concurrent
    read-only use.  `spectrum` is the circulant transfer function when the
    operator diagonalizes in the Fourier domain, else None.
    """

    kind: str = "abstract"

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def spectrum(self) -> np.ndarray | None:
        return None

    def _check_shape(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, :, None]
        if x.ndim != 3:
            raise DimensionError(f"operator input must be HxW(xC), got shape {x.shape}")
        return x


class IdentityOperator(LinearOperator):
    kind = "identity"

    def forward(self, x):
        return self._check_shape(x).copy()

    def adjoint(self, v):
        return self._check_shape(v).copy()


class MaskOperator(LinearOperator):
    """Pixel-wise 0/1 mask, applied identically to every channel."""

    kind = "mask"

    def __init__(self, mask: np.ndarray):
        m = np.asarray(mask, dtype=np.float64)
        if m.ndim != 2:
            raise DimensionError("mask must be 2-D (H, W)")
        if not np.all((m == 0) | (m == 1)):
            raise ParameterError("mask entries must be 0 or 1")
        self.mask = m

    def forward(self, x):
        x = self._check_shape(x)
        if x.shape[:2] != self.mask.shape:
            raise DimensionError(
                f"mask shape {self.mask.shape} does not match image {x.shape[:2]}"
            )
        return x * self.mask[:, :, None]

    def adjoint(self, v):
        return self.forward(v)  # diagonal, self-adjoint


def kernel_spectrum(kernel: BlurKernel, shape_hw: tuple[int, int]) -> np.ndarray:
    """Transfer function of periodic convolution with the kernel's center at (0,0)."""
    h, w = shape_hw
    kh, kw = kernel.kh, kernel.kw
    if kh > h or kw > w:
        raise DimensionError(f"kernel {kh}x{kw} larger than image {h}x{w}")
    pad = np.zeros((h, w), dtype=np.float64)
    pad[:kh, :kw] = kernel.weights
    pad = np.roll(pad, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return np.fft.fft2(pad)


class CirculantBlurOperator(LinearOperator):
    """Periodic 2-D convolution applied via the cached FFT spectrum."""

    kind = "circulant-blur"

    def __init__(self, kernel: BlurKernel, shape_hw: tuple[int, int]):
        self.kernel = kernel
        self.shape_hw = (int(shape_hw[0]), int(shape_hw[1]))
        self._spectrum = kernel_spectrum(kernel, self.shape_hw)

    @property
    def spectrum(self) -> np.ndarray:
        return self._spectrum

    def _apply(self, x: np.ndarray, spec: np.ndarray) -> np.ndarray:
        x = self._check_shape(x)
        if x.shape[:2] != self.shape_hw:
            raise DimensionError(
                f"operator built for {self.shape_hw}, got image {x.shape[:2]}"
            )
        out = np.empty_like(x)
        for c in range(x.shape[2]):
            out[:, :, c] = np.real(np.fft.ifft2(np.fft.fft2(x[:, :, c]) * spec))
        return out

    def forward(self, x):
        return self._apply(x, self._spectrum)

    def adjoint(self, v):
        return self._apply(v, np.conj(self._spectrum))


class CallableOperator(LinearOperator):
    """Wrap arbitrary forward/adjoint callables (no spectrum available)."""

    kind = "custom"

    def __init__(self, forward, adjoint):
        self._fwd = forward
        self._adj = adjoint

    def forward(self, x):
        return self._fwd(self._check_shape(x))

    def adjoint(self, v):
        return self._adj(self._check_shape(v))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def apply_forward(op: LinearOperator, x: ImageTensor | np.ndarray) -> ImageTensor:
    arr = x.array if isinstance(x, ImageTensor) else np.asarray(x, dtype=np.float64)
    return ImageTensor(op.forward(arr))


def apply_adjoint(op: LinearOperator, v: ImageTensor | np.ndarray) -> ImageTensor:
    arr = v.array if isinstance(v, ImageTensor) else np.asarray(v, dtype=np.float64)
    return ImageTensor(op.adjoint(arr))


def generate_measurement(
    x: ImageTensor | np.ndarray,
    op: LinearOperator,
    noise_sigma: float,
    seed: int,
) -> Measurement:
    """y = A x + e with e ~ N(0, noise_sigma² I), deterministic per seed.

    noise_sigma == 0 returns A x exactly (no generator draw at all).
    """
    if noise_sigma < 0:
        raise ParameterError(f"noise_sigma must be >= 0, got {noise_sigma}")
    ax = apply_forward(op, x).array
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        ax = ax + noise_sigma * rng.standard_normal(ax.shape)
    return Measurement(y=ImageTensor(ax), noise_sigma=float(noise_sigma), seed=int(seed))


# ---------------------------------------------------------------------------
# Kernel file I/O
# ---------------------------------------------------------------------------


def load_kernel(path: str | Path, normalize: bool = True) -> BlurKernel:
    """Read the plain-text kernel format: first line "kh kw", then kh·kw reals."""
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise ParameterError(f"kernel file {path}: missing header")
    try:
        kh, kw = int(tokens[0]), int(tokens[1])
        vals = [float(t) for t in tokens[2:]]
    except ValueError as exc:
        raise ParameterError(f"kernel file {path}: {exc}") from exc
    if len(vals) != kh * kw:
        raise ParameterError(
            f"kernel file {path}: expected {kh * kw} weights, found {len(vals)}"
        )
    kern = BlurKernel(np.array(vals, dtype=np.float64).reshape(kh, kw))
    return kern.normalized() if normalize else kern


def save_kernel(kernel: BlurKernel, path: str | Path) -> None:
    lines = [f"{kernel.kh} {kernel.kw}"]
    for row in kernel.weights:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Image file I/O (8/16-bit PNG, plain PGM/PPM); values map linearly to [0,1]
# ---------------------------------------------------------------------------


def load_image(path: str | Path) -> ImageTensor:
    from PIL import Image

    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic in (b"P2", b"P3"):
        return _load_plain_netpbm(path)
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        elif im.mode in ("L", "RGB"):
            arr = np.asarray(im, dtype=np.float64) / 255.0
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return ImageTensor(arr)


def _load_plain_netpbm(path: Path) -> ImageTensor:
    """Plain (ASCII) PGM/PPM; preserves any maxval up to 65535 exactly."""
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    magic = tokens[0]
    channels = 1 if magic == "P2" else 3
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    vals = np.array([int(t) for t in tokens[4 : 4 + h * w * channels]], dtype=np.float64)
    if vals.size != h * w * channels:
        raise ParameterError(f"{path}: expected {h * w * channels} pixel values")
    return ImageTensor(vals.reshape(h, w, channels) / float(maxval))


def save_image(img: ImageTensor, path: str | Path, bitdepth: int = 8) -> None:
    """Clamp to [0, 1] and write PNG (8/16-bit) or plain PGM/PPM (ASCII).

    16-bit color PNG is not supported by the PNG backend; use .ppm for
    16-bit color output.
    """
    from PIL import Image

    if bitdepth not in (8, 16):
        raise ParameterError(f"bitdepth must be 8 or 16, got {bitdepth}")
    path = Path(path)
    arr = np.clip(img.array, 0.0, 1.0)
    maxval = 255 if bitdepth == 8 else 65535
    quant = np.rint(arr * maxval).astype(np.uint16 if bitdepth == 16 else np.uint8)

    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        _save_netpbm(quant, path, maxval)
        return
    if bitdepth == 16:
        if img.channels != 1:
            raise ParameterError("16-bit PNG output is grayscale-only; use .ppm")
        Image.fromarray(quant[:, :, 0]).save(path)
    else:
        data = quant[:, :, 0] if img.channels == 1 else quant
        Image.fromarray(data).save(path)


def _save_netpbm(quant: np.ndarray, path: Path, maxval: int) -> None:
    h, w, c = quant.shape
    magic = "P2" if c == 1 else "P3"
    rows = [f"{magic}", f"{w} {h}", f"{maxval}"]
    flat = quant.reshape(h, w * c)
    for r in range(h):
        rows.append(" ".join(str(int(v)) for v in flat[r]))
    path.write_text("\n".join(rows) + "\n")
