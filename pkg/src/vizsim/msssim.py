"""Multi-scale SSIM over a dyadic pyramid, its YUV variant, and the
similarity-to-distance transform."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from vizsim.imagecore import COLOR_STANDARDS, ImageRGB, as_plane, downsample2, to_grayscale, to_yuv
from vizsim.ssim import COMPONENT_FLOOR, SsimParams, combine_components, ssim_components

ColorMode = Literal["grayscale", "yuv"]

UNIFORM_WEIGHTS = (1.0, 1.0, 1.0, 1.0, 1.0)


class PyramidDepthError(ValueError):
    """The images are too small for the requested number of scales."""


def check_weights(weights: Sequence[float]) -> tuple[float, ...]:
    w = tuple(float(v) for v in weights)
    if not w:
        raise ValueError("weight vector must have at least one entry")
    for i, v in enumerate(w):
        if not math.isfinite(v) or v <= 0:
            raise ValueError(f"weight w{i + 1}={v!r} must be finite and positive")
    return w


@dataclass(frozen=True)
class MsSsimParams:
    """Scale weights (finest first), the per-scale SSIM setup and colour handling.

    The luminance term enters once, at the coarsest scale, with exponent 1;
    scale ``i`` contributes its contrast-structure term raised to ``w_i``.
    """

    weights: tuple[float, ...] = UNIFORM_WEIGHTS
    base: SsimParams = field(default_factory=SsimParams)
    color_mode: ColorMode = "yuv"
    color_standard: str = "bt601"

    def __post_init__(self):
        object.__setattr__(self, "weights", check_weights(self.weights))
        if self.color_mode not in ("grayscale", "yuv"):
            raise ValueError(f"unknown color mode {self.color_mode!r}")
        if self.color_standard not in COLOR_STANDARDS:
            raise ValueError(f"unknown color standard {self.color_standard!r}")

    @property
    def scales(self) -> int:
        return len(self.weights)


def max_scales(shape: tuple[int, int], window_size: int) -> int:
    """Largest K with ``min(shape) >= 2**(K-1) * window_size``."""
    m = min(shape)
    if m < window_size:
        return 0
    return int(math.floor(math.log2(m / window_size))) + 1


def _check_depth(shape, scales: int, window_size: int) -> None:
    if min(shape) < 2 ** (scales - 1) * window_size:
        raise PyramidDepthError(
            f"image {shape[1]}x{shape[0]} supports at most "
            f"{max_scales(shape, window_size)} scales with a {window_size}px window, {scales} requested"
        )


@dataclass(frozen=True, eq=False)
class ScaleComponents:
    """Weight-independent pieces of an MS-SSIM evaluation for one image pair.

    ``cs_means`` holds the spatially averaged contrast*structure term for every
    scale but the coarsest; the coarsest scale keeps full component maps so
    that any weight vector of the same length can be applied afterwards.
    """

    cs_means: tuple[float, ...]
    coarse_l: np.ndarray
    coarse_c: np.ndarray
    coarse_s: np.ndarray

    @property
    def scales(self) -> int:
        return len(self.cs_means) + 1

    def combine(self, weights: Sequence[float]) -> float:
        if len(weights) != self.scales:
            raise ValueError(f"expected {self.scales} weights, got {len(weights)}")
        prod = 1.0
        for m, w in zip(self.cs_means, weights[:-1]):
            prod *= max(m, COMPONENT_FLOOR) ** w
        wk = weights[-1]
        coarse = combine_components(self.coarse_l, self.coarse_c, self.coarse_s, 1.0, wk, wk)
        return float(np.mean(coarse)) * prod


def scale_components(x, y, params: MsSsimParams) -> ScaleComponents:
    x = as_plane(x, "x")
    y = as_plane(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"image dimensions differ: {x.shape} vs {y.shape}")
    base = params.base
    _check_depth(x.shape, params.scales, base.window.size)
    cs_means = []
    for _ in range(params.scales - 1):
        _, con, struct = ssim_components(x, y, base)
        cs_means.append(float(np.mean(con * struct)))
        x, y = downsample2(x), downsample2(y)
    lum, con, struct = ssim_components(x, y, base)
    return ScaleComponents(tuple(cs_means), lum, con, struct)


def ms_ssim(x, y, params: MsSsimParams | None = None) -> float:
    """Multi-scale SSIM of two planes."""
    params = params or MsSsimParams()
    return scale_components(x, y, params).combine(params.weights)


def yuv_components(x: ImageRGB, y: ImageRGB, params: MsSsimParams) -> list[ScaleComponents]:
    if x.shape != y.shape:
        raise ValueError(f"image dimensions differ: {x.shape} vs {y.shape}")
    xs = to_yuv(x, params.color_standard)
    ys = to_yuv(y, params.color_standard)
    return [scale_components(a, b, params) for a, b in zip(xs, ys)]


def ms_ssim_yuv(x: ImageRGB, y: ImageRGB, params: MsSsimParams | None = None) -> float:
    """Mean of the MS-SSIM scores of the Y, U and V planes."""
    params = params or MsSsimParams()
    parts = yuv_components(x, y, params)
    return combine_yuv(parts, params.weights)


def combine_yuv(parts: Sequence[ScaleComponents], weights: Sequence[float]) -> float:
    y, u, v = (p.combine(weights) for p in parts)
    return (y + u + v) / 3.0


def image_similarity(x: ImageRGB, y: ImageRGB, params: MsSsimParams | None = None) -> float:
    """MS-SSIM of two colour images using ``params.color_mode``."""
    params = params or MsSsimParams()
    if params.color_mode == "yuv":
        return ms_ssim_yuv(x, y, params)
    return ms_ssim(to_grayscale(x), to_grayscale(y), params)


def similarity_to_distance(s: float) -> float:
    """Map a similarity in [-1, 1] to a distance ``(1 - s) / 2`` in [0, 1]."""
    s = float(s)
    if not -1.0 <= s <= 1.0:
        raise ValueError(f"similarity {s!r} outside [-1, 1]")
    return (1.0 - s) / 2.0
