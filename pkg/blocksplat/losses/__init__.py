"""
BlockSplat Losses

Photometric, depth-prior and pseudo-view loss terms with gradients with
respect to the rendered buffers.
"""

from .depth import depth_prior_loss
from .photometric import EMPTY_MASK, NO_VALID_PIXELS, LossResult, l1_loss, photometric_loss
from .pseudo_view import PseudoViewSetup, WarpResult, make_pseudo_view, pseudo_view_loss, warp_pseudo_to_ref
from .ssim import gaussian_window, ssim_map, ssim_metric, ssim_value_and_grad

__all__ = [
    "EMPTY_MASK",
    "NO_VALID_PIXELS",
    "LossResult",
    "PseudoViewSetup",
    "WarpResult",
    "depth_prior_loss",
    "gaussian_window",
    "l1_loss",
    "make_pseudo_view",
    "photometric_loss",
    "pseudo_view_loss",
    "ssim_map",
    "ssim_metric",
    "ssim_value_and_grad",
    "warp_pseudo_to_ref",
]
