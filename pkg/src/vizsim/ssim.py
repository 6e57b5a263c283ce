"""Single-scale structural similarity.

Component similarities (luminance, contrast, structure), the windowed
per-pixel SSIM map and its spatial mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, NamedTuple

import numpy as np

from vizsim.imagecore import Kernel, Padding, as_plane, convolve, gaussian_kernel

VarianceMode = Literal["weighted", "sample"]

#: floor applied to components before non-unit exponents
COMPONENT_FLOOR = 1e-6


class UndefinedRatioError(ArithmeticError):
    """A similarity ratio is 0/0 because its stabilizing constant is zero."""


def _default_window() -> Kernel:
    return gaussian_kernel(3, 1.0)


@dataclass(frozen=True)
class SsimParams:
    """Configuration for windowed SSIM.

    The stabilizing constants default to ``(0.01)^2``, ``(0.03)^2`` and
    ``c2 / 2`` for a dynamic range of 1. Setting them to zero gives the bare
    ratios, which are undefined on flat patches.

    ``variance="sample"`` switches to unweighted ``1/(D-1)`` statistics and
    requires a uniform window with ``padding="valid"``.
    """

    window: Kernel = field(default_factory=_default_window)
    padding: Padding = "zero"
    c1: float = 0.01**2
    c2: float = 0.03**2
    c3: float | None = None
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    variance: VarianceMode = "weighted"

    def __post_init__(self):
        if self.c3 is None:
            object.__setattr__(self, "c3", self.c2 / 2.0)
        for name in ("c1", "c2", "c3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.padding not in ("zero", "valid"):
            raise ValueError(f"unknown padding {self.padding!r}")
        if self.variance not in ("weighted", "sample"):
            raise ValueError(f"unknown variance mode {self.variance!r}")
        if self.variance == "sample":
            if self.padding != "valid" or not self.window.is_uniform or self.window.size < 2:
                raise ValueError("sample variance needs a uniform window (size > 1) and valid padding")

    @classmethod
    def classic(cls, **kw) -> "SsimParams":
        """11x11, sigma 1.5 window for cross-checking against common SSIM code."""
        return cls(window=gaussian_kernel(11, 1.5), **kw)

    @property
    def unit_exponents(self) -> bool:
        return self.alpha == 1.0 and self.beta == 1.0 and self.gamma == 1.0

    def with_exponents(self, alpha: float, beta: float, gamma: float) -> "SsimParams":
        return replace(self, alpha=alpha, beta=beta, gamma=gamma)


class WindowStats(NamedTuple):
    """Local statistics; each field is a scalar or an array of window values."""

    mu_x: np.ndarray
    mu_y: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    sigma_xy: np.ndarray


def _ratio(num, den, what: str):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    if np.any(den == 0):
        raise UndefinedRatioError(f"{what} similarity is undefined (zero denominator); use a positive constant")
    return num / den


def luminance_similarity(mu_x, mu_y, c1: float = 0.0):
    """``(2 mu_x mu_y + c1) / (mu_x^2 + mu_y^2 + c1)``, in [0, 1] for non-negative means."""
    mu_x = np.asarray(mu_x, dtype=np.float64)
    mu_y = np.asarray(mu_y, dtype=np.float64)
    val = _ratio(2.0 * (mu_x * mu_y) + c1, (mu_x * mu_x + mu_y * mu_y) + c1, "luminance")
    # AM-GM bounds the ratio by 1; clip rounding excursions
    return np.minimum(val, 1.0)[()]


def _contrast_from_var(var_x, var_y, c2: float):
    # sqrt(v*v) == v exactly, so equal windows give exactly 1
    sd_prod = np.sqrt(var_x * var_y)
    val = _ratio(2.0 * sd_prod + c2, (var_x + var_y) + c2, "contrast")
    return np.clip(val, 0.0, 1.0)[()]


def _structure_from_var(cov, var_x, var_y, c3: float):
    sd_prod = np.sqrt(var_x * var_y)
    # Cauchy-Schwarz bound; also absorbs rounding in cov vs the clamped variances
    cov = np.clip(cov, -sd_prod, sd_prod)
    val = _ratio(cov + c3, sd_prod + c3, "structure")
    return np.clip(val, -1.0, 1.0)[()]


def contrast_similarity(sigma_x, sigma_y, c2: float = 0.0):
    """``(2 s_x s_y + c2) / (s_x^2 + s_y^2 + c2)``."""
    sx = np.asarray(sigma_x, dtype=np.float64)
    sy = np.asarray(sigma_y, dtype=np.float64)
    if np.any(sx < 0) or np.any(sy < 0):
        raise ValueError("standard deviations must be non-negative")
    return _contrast_from_var(sx * sx, sy * sy, c2)


def structure_similarity(stats: WindowStats, c3: float = 0.0):
    """``(s_xy + c3) / (s_x s_y + c3)``, i.e. the correlation of the two windows."""
    sx = np.asarray(stats.sigma_x, dtype=np.float64)
    sy = np.asarray(stats.sigma_y, dtype=np.float64)
    return _structure_from_var(np.asarray(stats.sigma_xy, dtype=np.float64), sx * sx, sy * sy, c3)


def patch_stats(x, y) -> WindowStats:
    """Unweighted population statistics of two equal-sized patches."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("patches differ in size")
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    return WindowStats(mx, my, np.sqrt(np.mean(dx * dx)), np.sqrt(np.mean(dy * dy)), np.mean(dx * dy))


def window_stats(x, y, params: SsimParams) -> tuple[WindowStats, np.ndarray, np.ndarray]:
    """Windowed means, deviations and covariance.

    Returns the stats plus the two variance maps (kept to avoid squaring the
    square roots again).
    """
    k, pad = params.window, params.padding
    mu_x = convolve(x, k, pad)
    mu_y = convolve(y, k, pad)
    var_x = convolve(x * x, k, pad) - mu_x * mu_x
    var_y = convolve(y * y, k, pad) - mu_y * mu_y
    cov = convolve(x * y, k, pad) - mu_x * mu_y
    if params.variance == "sample":
        n = k.size * k.size
        corr = n / (n - 1.0)
        var_x, var_y, cov = var_x * corr, var_y * corr, cov * corr
    var_x = np.maximum(var_x, 0.0)
    var_y = np.maximum(var_y, 0.0)
    stats = WindowStats(mu_x, mu_y, np.sqrt(var_x), np.sqrt(var_y), cov)
    return stats, var_x, var_y


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = as_plane(x, "x")
    y = as_plane(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"image dimensions differ: {x.shape} vs {y.shape}")
    return x, y


def ssim_components(x, y, params: SsimParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Luminance, contrast and structure maps for a pair of planes."""
    x, y = _check_pair(x, y)
    stats, var_x, var_y = window_stats(x, y, params)
    lum = luminance_similarity(stats.mu_x, stats.mu_y, params.c1)
    con = _contrast_from_var(var_x, var_y, params.c2)
    struct = _structure_from_var(stats.sigma_xy, var_x, var_y, params.c3)
    return np.asarray(lum), np.asarray(con), np.asarray(struct)


def combine_components(lum, con, struct, alpha=1.0, beta=1.0, gamma=1.0) -> np.ndarray:
    """``l^alpha * c^beta * s^gamma``; components are floored before non-unit powers."""
    if alpha == 1.0 and beta == 1.0 and gamma == 1.0:
        return lum * con * struct
    f = COMPONENT_FLOOR
    return np.maximum(lum, f) ** alpha * np.maximum(con, f) ** beta * np.maximum(struct, f) ** gamma


def ssim_map(x, y, params: SsimParams | None = None) -> np.ndarray:
    """Per-pixel SSIM of two planes.

    With zero padding the map has the input shape; with valid padding it
    shrinks by ``window.size - 1`` per axis.
    """
    params = params or SsimParams()
    lum, con, struct = ssim_components(x, y, params)
    return combine_components(lum, con, struct, params.alpha, params.beta, params.gamma)


def mean_ssim(x, y, params: SsimParams | None = None) -> float:
    """Spatial mean of :func:`ssim_map`."""
    return float(np.mean(ssim_map(x, y, params)))


def mse(x, y) -> float:
    x, y = _check_pair(x, y)
    d = x - y
    return float(np.mean(d * d))
