"""Perceptual similarity for visualization images.

SSIM, multi-scale SSIM (grayscale and YUV), weight tuning from triplet
judgments, clustering agreement, chart rasterization and discriminability
benchmarks.
"""

from vizsim.imagecore import (
    ImageRGB,
    Kernel,
    convolve,
    downsample2,
    gaussian_kernel,
    load_image,
    save_image,
    to_grayscale,
    to_yuv,
)
from vizsim.ssim import SsimParams, mean_ssim, ssim_map
from vizsim.msssim import MsSsimParams, ms_ssim, ms_ssim_yuv, similarity_to_distance

__version__ = "0.1.0"

__all__ = [
    "ImageRGB",
    "Kernel",
    "MsSsimParams",
    "SsimParams",
    "convolve",
    "downsample2",
    "gaussian_kernel",
    "load_image",
    "mean_ssim",
    "ms_ssim",
    "ms_ssim_yuv",
    "save_image",
    "similarity_to_distance",
    "ssim_map",
    "to_grayscale",
    "to_yuv",
]
