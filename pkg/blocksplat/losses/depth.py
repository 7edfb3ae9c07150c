"""
BlockSplat Depth Prior Loss

L1 between rendered and prior inverse depth after a median-ratio scale
alignment of the prior.
"""

from typing import Optional, Union

import numpy as np

from ..config import LossConfig
from ..exceptions import DimensionMismatch
from ..sfm.types import DepthPrior
from ..utils import get_logger
from .photometric import NO_VALID_PIXELS, LossResult

logger = get_logger(__name__)


def _median_indices(values: np.ndarray):
    """Indices whose mean is the median of ``values``."""
    order = np.argsort(values, kind="stable")
    n = len(values)
    if n % 2:
        return order[n // 2 : n // 2 + 1]
    return order[n // 2 - 1 : n // 2 + 1]


def depth_prior_loss(
    rendered_depth: np.ndarray,
    prior: Union[DepthPrior, np.ndarray],
    accum_alpha: np.ndarray,
    cfg: Optional[LossConfig] = None,
) -> LossResult:
    """
    Inverse-depth L1 against a scale-aligned prior.

    A pixel is used when the prior is finite and positive, the rendered
    depth is positive and ``accum_alpha >= cfg.alpha_mask_threshold``. The
    prior inverse depth is multiplied by ``s = median(prior / rendered)``
    over those pixels. The gradient, with respect to ``rendered_depth``,
    includes the dependence of ``s`` on the rendered depth.

    Returns:
        LossResult; flagged NoValidPixels when no pixel qualifies
    """
    cfg = cfg or LossConfig()
    rendered_depth = np.asarray(rendered_depth, dtype=np.float64)
    prior_depth = prior.depth if isinstance(prior, DepthPrior) else np.asarray(prior, dtype=np.float64)
    if prior_depth is None:
        return LossResult.flagged(rendered_depth.shape, NO_VALID_PIXELS)
    if prior_depth.shape != rendered_depth.shape:
        raise DimensionMismatch(rendered_depth.shape, prior_depth.shape, what="depth prior")
    if accum_alpha.shape != rendered_depth.shape:
        raise DimensionMismatch(rendered_depth.shape, accum_alpha.shape, what="accumulated alpha")

    with np.errstate(invalid="ignore"):
        valid = (
            np.isfinite(prior_depth)
            & (prior_depth > 0)
            & (rendered_depth > 0)
            & (accum_alpha >= cfg.alpha_mask_threshold)
        )
    if not valid.any():
        logger.debug("Depth prior loss has no valid pixels")
        return LossResult.flagged(rendered_depth.shape, NO_VALID_PIXELS)

    d_r = rendered_depth[valid]
    inv_r = 1.0 / d_r
    inv_e = 1.0 / prior_depth[valid]
    ratio = inv_r / inv_e
    mid = _median_indices(ratio)
    scale = ratio[mid].mean()

    residual = scale * inv_e - inv_r
    n = len(residual)
    value = float(np.abs(residual).mean())

    sign = np.sign(residual) / n
    d_inv_r = -sign
    d_scale = float((sign * inv_e).sum())
    d_inv_r[mid] += d_scale / (len(mid) * inv_e[mid])

    grad = np.zeros_like(rendered_depth)
    grad[valid] = d_inv_r * (-inv_r * inv_r)
    return LossResult(value, grad)
