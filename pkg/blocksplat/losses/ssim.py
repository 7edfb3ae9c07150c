"""
BlockSplat SSIM

Structural similarity with a separable Gaussian window, zero padded at
the image border, and its exact gradient with respect to the first image.
"""

from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.ndimage import correlate1d

from ..exceptions import DimensionMismatch

C1 = 0.01 ** 2
C2 = 0.03 ** 2


@lru_cache(maxsize=8)
def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Normalized 1-D Gaussian taps."""
    x = np.arange(size, dtype=np.float64) - size // 2
    taps = np.exp(-(x * x) / (2.0 * sigma * sigma))
    taps /= taps.sum()
    taps.flags.writeable = False
    return taps


def _blur(image: np.ndarray, taps: np.ndarray) -> np.ndarray:
    out = correlate1d(image, taps, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, taps, axis=1, mode="constant", cval=0.0)


def _as_channels(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    return image[..., None] if image.ndim == 2 else image


def _statistics(x: np.ndarray, y: np.ndarray, taps: np.ndarray):
    mu_x = _blur(x, taps)
    mu_y = _blur(y, taps)
    e_xx = _blur(x * x, taps)
    e_yy = _blur(y * y, taps)
    e_xy = _blur(x * y, taps)
    a1 = 2.0 * mu_x * mu_y + C1
    a2 = 2.0 * (e_xy - mu_x * mu_y) + C2
    b1 = mu_x * mu_x + mu_y * mu_y + C1
    b2 = (e_xx - mu_x * mu_x) + (e_yy - mu_y * mu_y) + C2
    return mu_x, mu_y, a1, a2, b1, b2


def _check(x: np.ndarray, y: np.ndarray):
    if x.shape != y.shape:
        raise DimensionMismatch(x.shape, y.shape, what="image pair")


def ssim_map(x: np.ndarray, y: np.ndarray, window: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Per-pixel, per-channel SSIM of two images in [0, 1]."""
    x, y = _as_channels(x), _as_channels(y)
    _check(x, y)
    _, _, a1, a2, b1, b2 = _statistics(x, y, gaussian_window(window, sigma))
    return (a1 * a2) / (b1 * b2)


def ssim_value_and_grad(
    x: np.ndarray,
    y: np.ndarray,
    window: int = 11,
    sigma: float = 1.5,
) -> Tuple[float, np.ndarray]:
    """
    Mean SSIM of ``x`` against ``y`` and its gradient with respect to ``x``.

    The gradient has the shape of ``x``.
    """
    shape = np.shape(x)
    x, y = _as_channels(x), _as_channels(y)
    _check(x, y)
    taps = gaussian_window(window, sigma)
    mu_x, mu_y, a1, a2, b1, b2 = _statistics(x, y, taps)
    s = (a1 * a2) / (b1 * b2)
    n = s.size

    # grouped so the gradient is exactly zero when x == y
    d_mu = s * (2.0 * mu_y * (1.0 / a1 - 1.0 / a2) + 2.0 * mu_x * (1.0 / b2 - 1.0 / b1)) / n
    d_exx = -s / b2 / n
    d_exy = 2.0 * s / a2 / n

    # The window is symmetric, so the adjoint of the blur is the blur itself.
    grad = _blur(d_mu, taps) + 2.0 * x * _blur(d_exx, taps) + y * _blur(d_exy, taps)
    return float(s.mean()), grad.reshape(shape)


def ssim_metric(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM, the evaluation metric."""
    return float(ssim_map(a, b, window, sigma).mean())
