"""
BlockSplat Photometric Loss

Weighted L1 + (1 - SSIM) image loss and the result type shared by every
loss term.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..config import LossConfig
from ..exceptions import DimensionMismatch
from .ssim import ssim_value_and_grad

NO_VALID_PIXELS = "NoValidPixels"
EMPTY_MASK = "EmptyMask"


@dataclass
class LossResult:
    """
    Scalar loss with its gradient with respect to the loss input.

    ``flag`` is None or one of NO_VALID_PIXELS / EMPTY_MASK; flagged
    results have value 0 and an all-zero gradient.
    """

    value: float
    grad: np.ndarray
    flag: Optional[str] = None

    @classmethod
    def flagged(cls, shape, flag: str) -> "LossResult":
        return cls(0.0, np.zeros(shape), flag)


def l1_loss(a: np.ndarray, b: np.ndarray) -> LossResult:
    """Mean absolute error; gradient with respect to ``a``."""
    if a.shape != b.shape:
        raise DimensionMismatch(b.shape, a.shape, what="image pair")
    diff = a - b
    return LossResult(float(np.abs(diff).mean()), np.sign(diff) / diff.size)


def photometric_loss(rendered: np.ndarray, gt: np.ndarray, cfg: Optional[LossConfig] = None) -> LossResult:
    """
    ``(1 - lambda) * L1 + lambda * (1 - SSIM)`` of a rendered image.

    Args:
        rendered: (H, W, 3) rendered color
        gt: (H, W, 3) ground-truth color
        cfg: Loss weights and SSIM window; defaults when omitted

    Returns:
        LossResult with the gradient with respect to ``rendered``
    """
    cfg = cfg or LossConfig()
    rendered = np.asarray(rendered, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if rendered.shape != gt.shape:
        raise DimensionMismatch(gt.shape, rendered.shape, what="rendered image")

    lam = cfg.lambda_ssim
    l1 = l1_loss(rendered, gt)
    value = (1.0 - lam) * l1.value
    grad = (1.0 - lam) * l1.grad
    if lam > 0.0:
        ssim, d_ssim = ssim_value_and_grad(rendered, gt, cfg.ssim_window, cfg.ssim_sigma)
        value += lam * (1.0 - ssim)
        grad = grad - lam * d_ssim
    return LossResult(float(value), grad)
