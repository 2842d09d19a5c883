"""Float image planes, affine resampling, PSF convolution, and premultiplied-alpha math.

All pixel data lives in 32-bit float linear intensity, range [0, 1]; 8- and
16-bit PNG values are converted on load/store with round-half-up quantization
so repeated frame averaging never bands. Accumulating arithmetic runs in
float64 and is cast back, which keeps the premultiplication bound tight.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage, signal

# Per-pixel premultiplication slack: color may exceed alpha by at most this.
PREMUL_TOL = 1e-6
# Constructors tolerate float drift this far outside [0, 1] and clip it.
_RANGE_SLACK = 1e-4


def _checked_plane(data, name: str, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    arr = np.array(data, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    mn, mx = float(arr.min()), float(arr.max())
    if mn < lo - _RANGE_SLACK or mx > hi + _RANGE_SLACK:
        raise ValueError(f"{name} values outside [{lo}, {hi}]: min={mn:.6g} max={mx:.6g}")
    if mn < lo or mx > hi:
        arr = np.clip(arr, lo, hi)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RgbImage:
    """H x W x 3 linear-intensity image with channel values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"RgbImage expects shape (H, W, 3), got {arr.shape}")
        object.__setattr__(self, "data", _checked_plane(arr, "RgbImage"))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GrayMask:
    """Single-channel scalar field in [0, 1] (masks, alphas, intensity maps)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"GrayMask expects shape (H, W), got {arr.shape}")
        object.__setattr__(self, "data", _checked_plane(arr, "GrayMask"))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class RgbaPremultiplied:
    """Premultiplied-alpha image: color channels are pre-scaled by alpha.

    Invariant: color <= alpha + PREMUL_TOL at every pixel, so averaging and
    resampling never reconstruct color from nothing.
    """

    color: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        color = np.asarray(self.color)
        alpha = np.asarray(self.alpha)
        if color.ndim != 3 or color.shape[2] != 3:
            raise ValueError(f"color expects shape (H, W, 3), got {color.shape}")
        if alpha.shape != color.shape[:2]:
            raise ValueError(f"alpha shape {alpha.shape} != color plane {color.shape[:2]}")
        color = _checked_plane(color, "premultiplied color")
        alpha = _checked_plane(alpha, "alpha")
        if not np.all(color <= alpha[..., None] + PREMUL_TOL):
            worst = float((color - alpha[..., None]).max())
            raise ValueError(f"premultiplication bound violated: color - alpha up to {worst:.3g}")
        object.__setattr__(self, "color", color)
        object.__setattr__(self, "alpha", alpha)

    @property
    def height(self) -> int:
        return self.alpha.shape[0]

    @property
    def width(self) -> int:
        return self.alpha.shape[1]


@dataclass(frozen=True)
class Kernel2D:
    """Odd square convolution kernel, non-negative, normalized to sum 1."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 != 1:
            raise ValueError(f"Kernel2D expects an odd square array, got {w.shape}")
        if float(w.min()) < -1e-12:
            raise ValueError("Kernel2D weights must be non-negative")
        w = np.maximum(w, 0.0)
        total = float(w.sum())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"Kernel2D weights must sum to 1 (+-1e-6), got {total:.9f}")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def delta(cls) -> "Kernel2D":
        return cls(np.ones((1, 1)))


@dataclass(frozen=True)
class AffineTransform:
    """2x3 forward map of pixel coordinates: (x, y) -> A @ (x, y) + b."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"AffineTransform expects a 2x3 matrix, got {m.shape}")
        if abs(self.determinant_of(m)) < 1e-12:
            raise ValueError("singular affine transform")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @staticmethod
    def determinant_of(m: np.ndarray) -> float:
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    @property
    def determinant(self) -> float:
        return self.determinant_of(self.matrix)

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "AffineTransform":
        return cls(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy]]))

    @classmethod
    def rotation_scale_about(cls, angle: float, scale: float,
                             center: tuple[float, float]) -> "AffineTransform":
        """Rotate by `angle` and scale by `scale` around a fixed pixel."""
        cx, cy = center
        c, s = scale * np.cos(angle), scale * np.sin(angle)
        return cls(np.array([
            [c, -s, cx - c * cx + s * cy],
            [s, c, cy - s * cx - c * cy],
        ]))

    def inverse(self) -> "AffineTransform":
        m = self.matrix
        det = self.determinant
        a, b, tx = m[0]
        c, d, ty = m[1]
        inv = np.array([
            [d / det, -b / det, 0.0],
            [-c / det, a / det, 0.0],
        ])
        inv[0, 2] = -(inv[0, 0] * tx + inv[0, 1] * ty)
        inv[1, 2] = -(inv[1, 0] * tx + inv[1, 1] * ty)
        return AffineTransform(inv)


# ---------------------------------------------------------------------------
# Operations


def premultiply(image: RgbImage, alpha: GrayMask) -> RgbaPremultiplied:
    """Scale color channels by per-pixel alpha."""
    if image.data.shape[:2] != alpha.data.shape:
        raise ValueError(f"dimension mismatch: image {image.data.shape[:2]} vs alpha {alpha.data.shape}")
    return RgbaPremultiplied(image.data * alpha.data[..., None], alpha.data)


def unpremultiply_over(fg: RgbaPremultiplied, bg: RgbImage) -> RgbImage:
    """Porter-Duff "over": fg.color + bg * (1 - fg.alpha), clamped to [0, 1]."""
    if fg.alpha.shape != bg.data.shape[:2]:
        raise ValueError(f"dimension mismatch: fg {fg.alpha.shape} vs bg {bg.data.shape[:2]}")
    out = fg.color + bg.data * (1.0 - fg.alpha)[..., None]
    return RgbImage(np.clip(out, 0.0, 1.0))


def bilinear_sample(planes: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample H x W x C planes at float coords; reads outside the grid are zero.

    Exact for integer coordinates (the off-grid taps carry weight 0), which is
    what makes identity warps bit-level identities.
    """
    h, w = planes.shape[:2]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros(sx.shape + (planes.shape[2],), dtype=np.float64)
    for oy, wy in ((0, 1.0 - fy), (1, fy)):
        yy = y0 + oy
        yv = (yy >= 0) & (yy < h)
        yc = np.clip(yy, 0, h - 1)
        for ox, wx in ((0, 1.0 - fx), (1, fx)):
            xx = x0 + ox
            weight = (wx * wy) * (yv & (xx >= 0) & (xx < w))
            xc = np.clip(xx, 0, w - 1)
            out += weight[..., None] * planes[yc, xc]
    return out


def stack_planes(src: RgbaPremultiplied) -> np.ndarray:
    return np.concatenate([src.color, src.alpha[..., None]], axis=2).astype(np.float64)


def warp(src: RgbaPremultiplied, t: AffineTransform) -> RgbaPremultiplied:
    """Resample under a forward affine map (inverse-mapped bilinear lookup).

    Samples falling outside the source read as fully transparent.
    """
    inv = t.inverse().matrix
    ys, xs = np.meshgrid(np.arange(src.height, dtype=np.float64),
                         np.arange(src.width, dtype=np.float64), indexing="ij")
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    out = bilinear_sample(stack_planes(src), sx, sy)
    return RgbaPremultiplied(np.clip(out[..., :3], 0.0, 1.0), np.clip(out[..., 3], 0.0, 1.0))


def convolve(src: RgbaPremultiplied, k: Kernel2D) -> RgbaPremultiplied:
    """Convolve all four planes with the same PSF; zero (transparent) padding."""
    planes = stack_planes(src)
    out = np.empty_like(planes)
    for c in range(4):
        out[..., c] = signal.convolve2d(planes[..., c], k.weights,
                                        mode="same", boundary="fill", fillvalue=0.0)
    return RgbaPremultiplied(np.clip(out[..., :3], 0.0, 1.0), np.clip(out[..., 3], 0.0, 1.0))


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Discrete normalized Gaussian, truncated at ceil(3*sigma) taps per side."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def gaussian_blur_mask(m: GrayMask, sigma: float) -> GrayMask:
    """Separable Gaussian smoothing of a mask; sigma = 0 is the identity.

    Reflect padding keeps constant masks constant; values stay in [0, 1].
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return m
    w = gaussian_kernel_1d(sigma)
    data = m.data.astype(np.float64)
    data = ndimage.convolve1d(data, w, axis=0, mode="reflect")
    data = ndimage.convolve1d(data, w, axis=1, mode="reflect")
    return GrayMask(np.clip(data, 0.0, 1.0))


# ---------------------------------------------------------------------------
# PNG I/O: RGB 8-bit images, 8-bit 0/255 binary masks, 16-bit intensity maps.


def quantize_u8(data: np.ndarray) -> np.ndarray:
    """Round-half-up quantization to 8-bit."""
    return np.floor(np.clip(data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def quantize_u16(data: np.ndarray) -> np.ndarray:
    """Round-half-up quantization to 16-bit."""
    return np.floor(np.clip(data, 0.0, 1.0).astype(np.float64) * 65535.0 + 0.5).astype(np.uint16)


def load_rgb(path: str | Path) -> RgbImage:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return RgbImage(arr / 255.0)


def save_rgb(path: str | Path, image: RgbImage) -> None:
    Image.fromarray(quantize_u8(image.data), mode="RGB").save(path)


def load_gray(path: str | Path) -> GrayMask:
    """Load an 8- or 16-bit grayscale PNG as a [0, 1] mask."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=np.float32) / 65535.0
        else:
            arr = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
    return GrayMask(np.clip(arr, 0.0, 1.0))


def save_mask(path: str | Path, mask: GrayMask) -> None:
    """Write a binary mask as 8-bit grayscale 0/255, thresholding at 0.5."""
    data = np.where(mask.data >= 0.5, 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def save_intensity(path: str | Path, intensity: GrayMask) -> None:
    """Write a continuous [0, 1] map as 16-bit grayscale (0..65535)."""
    Image.fromarray(quantize_u16(intensity.data)).save(path)


def load_intensity(path: str | Path) -> GrayMask:
    return load_gray(path)
