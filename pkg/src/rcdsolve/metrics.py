"""Luminance-channel PSNR and SSIM.

Luminance uses full-range BT.601 weights ``Y = 0.299 R + 0.587 G + 0.114 B``.
SSIM follows Wang et al. (2004): 11x11 Gaussian window with sigma 1.5,
``C1 = 0.01**2`` and ``C2 = 0.03**2`` for unit dynamic range, averaged over all
window positions that lie fully inside the image.
"""

import dataclasses
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError
from .tensor import as_tensor

PSNR_CAP = 300.0
LUMA = np.array([0.299, 0.587, 0.114])
SSIM_WIN = 11
SSIM_SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


@dataclasses.dataclass(frozen=True)
class MetricReport:
    psnr_y: float
    ssim_y: float
    mse_y: float

    def line(self):
        return f"psnr_y={self.psnr_y:.6f} ssim_y={self.ssim_y:.6f}"


def rgb_to_y(img):
    img = as_tensor(img, 3, "image")
    if img.shape[2] != 3:
        raise DimensionError(f"expected H x W x 3 image, got {img.shape}")
    return img @ LUMA


def _pair(a, b):
    ya, yb = rgb_to_y(a), rgb_to_y(b)
    if ya.shape != yb.shape:
        raise DimensionError(f"image shapes differ: {np.shape(a)} vs {np.shape(b)}")
    return ya, yb


def mse_y(a, b):
    ya, yb = _pair(a, b)
    return float(np.mean((ya - yb) ** 2))


def psnr_y(a, b):
    """``10 log10(1 / MSE_Y)`` in dB, capped at 300 dB for identical luminance."""
    mse = mse_y(a, b)
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def _window():
    x = np.arange(SSIM_WIN) - SSIM_WIN // 2
    g = np.exp(-x ** 2 / (2 * SSIM_SIGMA ** 2))
    return g / g.sum()


def _filter_valid(x, g):
    x = sliding_window_view(x, len(g), axis=0) @ g
    return sliding_window_view(x, len(g), axis=1) @ g


def ssim_y(a, b):
    """Mean structural similarity of the luminance channels."""
    ya, yb = _pair(a, b)
    if min(ya.shape) < SSIM_WIN:
        raise DimensionError(f"SSIM needs images at least {SSIM_WIN}x{SSIM_WIN}, got {ya.shape}")
    if np.array_equal(ya, yb):
        return 1.0
    g = _window()
    mu_a, mu_b = _filter_valid(ya, g), _filter_valid(yb, g)
    s_aa = _filter_valid(ya * ya, g) - mu_a * mu_a
    s_bb = _filter_valid(yb * yb, g) - mu_b * mu_b
    s_ab = _filter_valid(ya * yb, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * s_ab + C2)
    den = (mu_a ** 2 + mu_b ** 2 + C1) * (s_aa + s_bb + C2)
    return float(np.mean(num / den))


def evaluate(a, b):
    return MetricReport(psnr_y(a, b), ssim_y(a, b), mse_y(a, b))
