"""Image substrate: planes, PNG I/O, colour conversion, kernels, filtering.

A *plane* is a 2-D ``numpy.ndarray`` of float64 intensities, indexed
``[row, column]``. All metric code consumes planes in the [0, 1] range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from os import PathLike
from typing import Literal, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

Padding = Literal["zero", "valid"]
PathType = Union[str, "PathLike[str]"]


class ImageDecodeError(ValueError):
    """Raised when a file exists but cannot be decoded as a supported image."""


@dataclass(frozen=True)
class LumaChroma:
    """Luma weights for a Y'UV-family conversion.

    ``kr`` and ``kb`` fix the luma row; the green weight is ``1 - kr - kb``.
    Chroma is emitted in the normalized form ``(B - Y) / (2 (1 - kb)) + 0.5``
    and ``(R - Y) / (2 (1 - kr)) + 0.5`` so both planes live in [0, 1] and
    achromatic pixels sit at 0.5.
    """

    name: str
    kr: float
    kb: float

    @property
    def kg(self) -> float:
        return 1.0 - self.kr - self.kb


BT601 = LumaChroma("bt601", 0.299, 0.114)
BT709 = LumaChroma("bt709", 0.2126, 0.0722)
COLOR_STANDARDS = {s.name: s for s in (BT601, BT709)}


def as_plane(values, name: str = "plane") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class ImageRGB:
    """Three same-sized planes with samples in [0, 1]."""

    r: np.ndarray
    g: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        planes = [as_plane(p, n).copy() for p, n in ((self.r, "r"), (self.g, "g"), (self.b, "b"))]
        if not (planes[0].shape == planes[1].shape == planes[2].shape):
            raise ValueError(
                f"channel shapes differ: {[p.shape for p in planes]}"
            )
        for p, n in zip(planes, "rgb"):
            if p.min() < 0.0 or p.max() > 1.0:
                raise ValueError(f"channel {n} has samples outside [0, 1]")
            p.setflags(write=False)
        object.__setattr__(self, "r", planes[0])
        object.__setattr__(self, "g", planes[1])
        object.__setattr__(self, "b", planes[2])

    @property
    def height(self) -> int:
        return self.r.shape[0]

    @property
    def width(self) -> int:
        return self.r.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.r.shape

    @classmethod
    def from_array(cls, rgb) -> "ImageRGB":
        """Build from an ``(H, W, 3)`` array of floats in [0, 1]."""
        arr = np.asarray(rgb, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got shape {arr.shape}")
        return cls(arr[..., 0], arr[..., 1], arr[..., 2])

    @classmethod
    def gray(cls, plane) -> "ImageRGB":
        p = as_plane(plane)
        return cls(p, p, p)

    def to_array(self) -> np.ndarray:
        return np.stack([self.r, self.g, self.b], axis=-1)

    def __eq__(self, other):
        if not isinstance(other, ImageRGB):
            return NotImplemented
        return (
            np.array_equal(self.r, other.r)
            and np.array_equal(self.g, other.g)
            and np.array_equal(self.b, other.b)
        )


def load_image(path: PathType) -> ImageRGB:
    """Decode a PNG into an :class:`ImageRGB` scaled to [0, 1].

    8- and 16-bit grayscale, RGB, RGBA and palette images are accepted. Any
    alpha channel is composited over a white background.
    """
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode image {str(path)!r}: {exc}") from exc
    if img.format != "PNG":
        raise ImageDecodeError(f"unsupported format {img.format!r} in {str(path)!r}; only PNG is read")

    mode = img.mode
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        # 16-bit grayscale
        plane = np.asarray(img, dtype=np.float64) / 65535.0
        return ImageRGB.gray(np.clip(plane, 0.0, 1.0))

    has_alpha = mode in ("RGBA", "LA", "PA") or (mode == "P" and "transparency" in img.info)
    if has_alpha:
        rgba = np.asarray(img.convert("RGBA"), dtype=np.float64) / 255.0
        alpha = rgba[..., 3:4]
        rgb = rgba[..., :3] * alpha + (1.0 - alpha)
        return ImageRGB.from_array(np.clip(rgb, 0.0, 1.0))
    rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return ImageRGB.from_array(rgb)


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(values) * 255.0), 0, 255).astype(np.uint8)


def save_image(img: ImageRGB, path: PathType) -> None:
    """Write an 8-bit RGB PNG."""
    Image.fromarray(_to_uint8(img.to_array()), mode="RGB").save(path, format="PNG")


def save_plane(plane, path: PathType, lo: float = 0.0, hi: float = 1.0) -> None:
    """Write a plane as an 8-bit grayscale PNG, mapping ``[lo, hi]`` to black..white."""
    p = as_plane(plane)
    if hi <= lo:
        raise ValueError("hi must exceed lo")
    Image.fromarray(_to_uint8((p - lo) / (hi - lo)), mode="L").save(path, format="PNG")


def quantize(img: ImageRGB) -> ImageRGB:
    """Round-trip through 8-bit storage, as if written to and read from PNG."""
    return ImageRGB.from_array(_to_uint8(img.to_array()) / 255.0)


def to_grayscale(img: ImageRGB) -> np.ndarray:
    """BT.601 luma ``0.299 R + 0.587 G + 0.114 B``, clamped to [0, 1]."""
    y = BT601.kr * img.r + BT601.kg * img.g + BT601.kb * img.b
    return np.clip(y, 0.0, 1.0)


def to_yuv(img: ImageRGB, standard: str = "bt601") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split into luma and two normalized chroma planes, all in [0, 1]."""
    std = COLOR_STANDARDS[standard]
    y = std.kr * img.r + std.kg * img.g + std.kb * img.b
    u = (img.b - y) / (2.0 * (1.0 - std.kb)) + 0.5
    v = (img.r - y) / (2.0 * (1.0 - std.kr)) + 0.5
    return np.clip(y, 0.0, 1.0), np.clip(u, 0.0, 1.0), np.clip(v, 0.0, 1.0)


def from_yuv(y, u, v, standard: str = "bt601") -> np.ndarray:
    """Inverse of :func:`to_yuv`; returns an unclipped ``(H, W, 3)`` array."""
    std = COLOR_STANDARDS[standard]
    y = np.asarray(y, dtype=np.float64)
    b = y + 2.0 * (1.0 - std.kb) * (np.asarray(u) - 0.5)
    r = y + 2.0 * (1.0 - std.kr) * (np.asarray(v) - 0.5)
    g = (y - std.kr * r - std.kb * b) / std.kg
    return np.stack([r, g, b], axis=-1)


@dataclass(frozen=True, eq=False)
class Kernel:
    """Square, normalized filter window."""

    size: int
    sigma: float
    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.shape != (self.size, self.size):
            raise ValueError(f"taps shape {taps.shape} does not match size {self.size}")
        if abs(taps.sum() - 1.0) > 1e-9:
            raise ValueError(f"kernel taps sum to {taps.sum()!r}, expected 1")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.taps == self.taps.flat[0]))


def _check_size(size: int) -> None:
    if not isinstance(size, (int, np.integer)) or size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size!r}")


def gaussian_kernel(size: int, sigma: float) -> Kernel:
    """Sampled 2-D Gaussian of odd ``size``, renormalized to sum to 1."""
    _check_size(size)
    if not sigma > 0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be positive and finite, got {sigma!r}")
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    g /= g.sum()
    return Kernel(int(size), float(sigma), np.outer(g, g))


def uniform_kernel(size: int) -> Kernel:
    """Box window; enables the unweighted sample-variance SSIM form."""
    _check_size(size)
    return Kernel(int(size), math.inf, np.full((size, size), 1.0 / (size * size)))


def convolve(p, k: Kernel, padding: Padding = "zero") -> np.ndarray:
    """Filter ``p`` with ``k``.

    ``zero`` pads with zeros and keeps the input shape; ``valid`` keeps only
    fully covered positions, shrinking each axis by ``k.size - 1``.
    """
    p = as_plane(p)
    if k.size > p.shape[0] or k.size > p.shape[1]:
        raise ValueError(f"kernel of size {k.size} is larger than plane {p.shape}")
    if k.size == 1:
        return p * k.taps[0, 0]
    if padding not in ("zero", "valid"):
        raise ValueError(f"unknown padding {padding!r}")
    # taps are symmetric, so correlation and convolution coincide
    out = ndimage.correlate(p, k.taps, mode="constant", cval=0.0)
    if padding == "valid":
        r = k.size // 2
        out = out[r : p.shape[0] - r, r : p.shape[1] - r]
    return out


def downsample2(p) -> np.ndarray:
    """2x2 box average followed by stride-2 decimation.

    Odd trailing rows/columns are dropped, so output dims are ``floor(dim / 2)``.
    """
    p = as_plane(p)
    h, w = p.shape
    if h < 2 or w < 2:
        raise ValueError(f"plane {p.shape} is too small to downsample")
    p = p[: h - h % 2, : w - w % 2]
    # pairwise sums keep constant planes exact
    return ((p[0::2, 0::2] + p[1::2, 0::2]) + (p[0::2, 1::2] + p[1::2, 1::2])) * 0.25
