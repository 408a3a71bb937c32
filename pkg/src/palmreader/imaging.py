"""Pixel-level primitives: color conversion, resizing, denoising, edge
detection, and HSV mask construction.

All operations are pure functions on immutable inputs. Images are 8-bit,
grayscale ``(h, w)`` or interleaved RGB ``(h, w, 3)``; masks are boolean
``(h, w)``. PNG is the only supported codec.
"""

from __future__ import annotations

import io
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import BadImageError

__all__ = [
    "RasterImage",
    "BinaryMask",
    "HsvPixel",
    "HsvRange",
    "to_grayscale",
    "resize",
    "gaussian_blur",
    "canny",
    "rgb_to_hsv",
    "hsv_mask",
    "mask_cleanup",
    "label_components",
    "read_png",
    "write_png",
    "encode_png",
]


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit raster: ``pixels`` is uint8 with shape (h, w) or (h, w, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {p.dtype}")
        if p.ndim == 2:
            pass
        elif p.ndim == 3 and p.shape[2] == 3:
            pass
        else:
            raise ValueError(f"pixels must be (h, w) or (h, w, 3), got shape {p.shape}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image dimensions must be positive")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def data(self) -> np.ndarray:
        """Row-major flat sample view, length = width * height * channels."""
        return self.pixels.reshape(-1)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean raster, one bit per pixel, row-major."""

    bits: np.ndarray

    def __post_init__(self):
        if self.bits.dtype != np.bool_ or self.bits.ndim != 2:
            raise ValueError("bits must be a 2-D boolean array")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class HsvPixel:
    """Hue in degrees [0, 360), saturation and value as fractions [0, 1]."""

    h: float
    s: float
    v: float

    def __post_init__(self):
        if not (0.0 <= self.h < 360.0):
            raise ValueError(f"hue out of [0, 360): {self.h}")
        if not (0.0 <= self.s <= 1.0 and 0.0 <= self.v <= 1.0):
            raise ValueError("saturation and value must be in [0, 1]")


@dataclass(frozen=True)
class HsvRange:
    """Inclusive HSV box; ``wraps_hue`` lets a red range straddle 0 degrees."""

    h_lo: float
    h_hi: float
    s_lo: float
    s_hi: float
    v_lo: float
    v_hi: float
    wraps_hue: bool = False

    def __post_init__(self):
        if self.s_lo > self.s_hi or self.v_lo > self.v_hi:
            raise ValueError("s_lo/v_lo must not exceed s_hi/v_hi")
        if not self.wraps_hue and self.h_lo > self.h_hi:
            raise ValueError("h_lo > h_hi requires wraps_hue")

    def contains(self, px: HsvPixel) -> bool:
        if self.wraps_hue:
            hue_ok = px.h >= self.h_lo or px.h <= self.h_hi
        else:
            hue_ok = self.h_lo <= px.h <= self.h_hi
        return hue_ok and self.s_lo <= px.s <= self.s_hi and self.v_lo <= px.v <= self.v_hi


# BT.601 luma weights.
_GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_grayscale(img: RasterImage) -> RasterImage:
    """Weighted-luma grayscale; 1-channel input returns an identical copy."""
    if img.channels == 1:
        return RasterImage(img.pixels.copy())
    luma = img.pixels.astype(np.float64) @ _GRAY_WEIGHTS
    out = np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)
    return RasterImage(out)


def resize(img: RasterImage, out_w: int, out_h: int) -> RasterImage:
    """Bilinear resize with half-pixel center alignment and edge clamping."""
    if out_w <= 0 or out_h <= 0:
        raise ValueError(f"target dimensions must be positive, got {out_w}x{out_h}")
    if out_w == img.width and out_h == img.height:
        return RasterImage(img.pixels.copy())

    src = img.pixels.astype(np.float64)
    sx = (np.arange(out_w) + 0.5) * (img.width / out_w) - 0.5
    sy = (np.arange(out_h) + 0.5) * (img.height / out_h) - 0.5
    x0 = np.clip(np.floor(sx).astype(int), 0, img.width - 1)
    y0 = np.clip(np.floor(sy).astype(int), 0, img.height - 1)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)
    fy = np.clip(sy - y0, 0.0, 1.0)

    if img.channels == 3:
        fx = fx[None, :, None]
        fy = fy[:, None, None]
    else:
        fx = fx[None, :]
        fy = fy[:, None]

    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    return RasterImage(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def gaussian_kernel_1d(sigma: float, ksize: int) -> np.ndarray:
    """Normalized 1-D Gaussian; ksize must be odd."""
    half = ksize // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def default_ksize(sigma: float) -> int:
    """Kernel size capturing >99% of the Gaussian mass."""
    return 2 * math.ceil(3 * sigma) + 1


def gaussian_blur(img: RasterImage, sigma: float, ksize: int | None = None) -> RasterImage:
    """Separable Gaussian convolution with edge-replicated borders.

    The kernel is normalized to sum 1; rounding happens once, after both
    passes, so the result matches a full 2-D convolution.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if ksize is None:
        ksize = default_ksize(sigma)
    if ksize < 1 or ksize % 2 == 0:
        raise ValueError(f"ksize must be odd and >= 1, got {ksize}")
    if img.channels != 1:
        raise ValueError("gaussian_blur expects a grayscale image")

    kernel = gaussian_kernel_1d(sigma, ksize)
    blurred = _separable_convolve(img.pixels.astype(np.float64), kernel)
    return RasterImage(np.clip(np.floor(blurred + 0.5), 0, 255).astype(np.uint8))


def _separable_convolve(channel: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    half = len(kernel) // 2
    if half == 0:
        return channel * kernel[0]
    padded = np.pad(channel, ((0, 0), (half, half)), mode="edge")
    rows = np.zeros_like(channel)
    for i, k in enumerate(kernel):
        rows += k * padded[:, i : i + channel.shape[1]]
    padded = np.pad(rows, ((half, half), (0, 0)), mode="edge")
    out = np.zeros_like(channel)
    for i, k in enumerate(kernel):
        out += k * padded[i : i + channel.shape[0], :]
    return out


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


def sobel_gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel gx/gy with edge-replicated borders."""
    padded = np.pad(gray.astype(np.float64), 1, mode="edge")
    h, w = gray.shape
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    for dy in range(3):
        for dx in range(3):
            window = padded[dy : dy + h, dx : dx + w]
            gx += _SOBEL_X[dy, dx] * window
            gy += _SOBEL_Y[dy, dx] * window
    return gx, gy


def canny(img: RasterImage, low: float, high: float) -> BinaryMask:
    """Sobel gradients, 4-bin non-maximum suppression, and double-threshold
    hysteresis keeping weak pixels 8-connected to a strong pixel.

    Thresholds apply to gradient magnitude rescaled so the per-image maximum
    maps to 255. Border pixels are never edges.
    """
    if low < 0 or low > high:
        raise ValueError(f"need 0 <= low <= high, got low={low} high={high}")
    if img.channels != 1:
        raise ValueError("canny expects a grayscale image")

    gx, gy = sobel_gradients(img.pixels)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    h, w = mag.shape
    if peak == 0.0:
        return BinaryMask(np.zeros((h, w), dtype=bool))
    mag *= 255.0 / peak

    thin = _non_maximum_suppression(gx, gy, mag)
    strong = (thin >= high) & (thin > 0)
    weak = (thin >= low) & (thin > 0)
    return BinaryMask(_hysteresis(strong, weak))


def _non_maximum_suppression(gx: np.ndarray, gy: np.ndarray, mag: np.ndarray) -> np.ndarray:
    """Keep pixels that dominate both neighbors along the quantized gradient
    direction; ties resolve toward the lower-index neighbor so a symmetric
    step edge thins to a single pixel."""
    h, w = mag.shape
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    padded = np.pad(mag, 1, mode="constant")

    # (prev, next) neighbor offsets per direction bin, as (dy, dx).
    bins = [
        ((angle < 22.5) | (angle >= 157.5), (0, -1), (0, 1)),
        ((angle >= 22.5) & (angle < 67.5), (-1, -1), (1, 1)),
        ((angle >= 67.5) & (angle < 112.5), (-1, 0), (1, 0)),
        ((angle >= 112.5) & (angle < 157.5), (-1, 1), (1, -1)),
    ]
    keep = np.zeros((h, w), dtype=bool)
    for in_bin, (py, px), (ny, nx) in bins:
        prev = padded[1 + py : 1 + py + h, 1 + px : 1 + px + w]
        nxt = padded[1 + ny : 1 + ny + h, 1 + nx : 1 + nx + w]
        keep |= in_bin & (mag > prev) & (mag >= nxt)

    out = np.where(keep, mag, 0.0)
    out[0, :] = out[-1, :] = 0.0
    out[:, 0] = out[:, -1] = 0.0
    return out


def _hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    """Breadth-first edge tracking from strong pixels through weak ones."""
    h, w = strong.shape
    visited = strong.copy()
    queue = deque(zip(*np.nonzero(strong)))
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and weak[ny, nx] and not visited[ny, nx]:
                    visited[ny, nx] = True
                    queue.append((ny, nx))
    return visited


def rgb_to_hsv(pixel: tuple[int, int, int]) -> HsvPixel:
    """Standard hexcone conversion of one 8-bit RGB pixel."""
    r, g, b = (c / 255.0 for c in pixel)
    mx = max(r, g, b)
    mn = min(r, g, b)
    delta = mx - mn
    if delta == 0.0:
        h = 0.0
    elif mx == r:
        h = 60.0 * (((g - b) / delta) % 6.0)
    elif mx == g:
        h = 60.0 * ((b - r) / delta + 2.0)
    else:
        h = 60.0 * ((r - g) / delta + 4.0)
    if h >= 360.0:
        h -= 360.0
    s = 0.0 if mx == 0.0 else delta / mx
    return HsvPixel(h, s, mx)


def _rgb_to_hsv_planes(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized hexcone conversion; returns (h, s, v) float planes."""
    rgb = pixels.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta == 0.0, 1.0, delta)

    h = np.zeros_like(mx)
    is_r = (mx == r) & (delta > 0)
    is_g = (mx == g) & (delta > 0) & ~is_r
    is_b = (delta > 0) & ~is_r & ~is_g
    h[is_r] = 60.0 * (((g - b)[is_r] / safe[is_r]) % 6.0)
    h[is_g] = 60.0 * ((b - r)[is_g] / safe[is_g] + 2.0)
    h[is_b] = 60.0 * ((r - g)[is_b] / safe[is_b] + 4.0)
    h[h >= 360.0] -= 360.0

    s = np.where(mx == 0.0, 0.0, delta / np.where(mx == 0.0, 1.0, mx))
    return h, s, mx


def hsv_mask(img: RasterImage, rng: HsvRange) -> BinaryMask:
    """Bit true wherever the pixel's HSV lies inside ``rng``."""
    if img.channels != 3:
        raise ValueError("hsv_mask expects an RGB image")
    h, s, v = _rgb_to_hsv_planes(img.pixels)
    if rng.wraps_hue:
        hue_ok = (h >= rng.h_lo) | (h <= rng.h_hi)
    else:
        hue_ok = (h >= rng.h_lo) & (h <= rng.h_hi)
    bits = hue_ok & (s >= rng.s_lo) & (s <= rng.s_hi) & (v >= rng.v_lo) & (v <= rng.v_hi)
    return BinaryMask(bits)


def label_components(bits: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected component labeling; labels 1..n, background 0."""
    h, w = bits.shape
    labels = np.zeros((h, w), dtype=np.int32)
    current = 0
    for sy, sx in zip(*np.nonzero(bits)):
        if labels[sy, sx]:
            continue
        current += 1
        labels[sy, sx] = current
        queue = deque([(sy, sx)])
        while queue:
            y, x = queue.popleft()
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and bits[ny, nx] and not labels[ny, nx]:
                        labels[ny, nx] = current
                        queue.append((ny, nx))
    return labels, current


def mask_cleanup(mask: BinaryMask, min_component_size: int) -> BinaryMask:
    """Drop 8-connected components smaller than ``min_component_size`` pixels."""
    if min_component_size < 0:
        raise ValueError("min_component_size must be >= 0")
    if min_component_size == 0 or not mask.bits.any():
        return BinaryMask(mask.bits.copy())
    labels, n = label_components(mask.bits)
    sizes = np.bincount(labels.reshape(-1), minlength=n + 1)
    keep = sizes >= min_component_size
    keep[0] = False
    return BinaryMask(keep[labels])


def read_png(source: bytes | str | Path) -> RasterImage:
    """Decode a PNG (or other Pillow-supported) image to 8-bit gray or RGB."""
    try:
        if isinstance(source, bytes):
            im = Image.open(io.BytesIO(source))
        else:
            im = Image.open(source)
        im.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise BadImageError(f"cannot decode image: {exc}") from exc
    if im.mode == "L":
        return RasterImage(np.asarray(im, dtype=np.uint8))
    return RasterImage(np.asarray(im.convert("RGB"), dtype=np.uint8))


def _to_pil(img: RasterImage) -> Image.Image:
    mode = "L" if img.channels == 1 else "RGB"
    return Image.fromarray(img.pixels, mode=mode)


def write_png(img: RasterImage, path: str | Path) -> None:
    _to_pil(img).save(path, format="PNG")


def encode_png(img: RasterImage) -> bytes:
    buf = io.BytesIO()
    _to_pil(img).save(buf, format="PNG")
    return buf.getvalue()
