"""
BlockSplat Gaussians

Gaussian primitive data model, initialization and PLY persistence.
"""

from .model import (
    PARAM_GROUPS,
    BlockGaussianState,
    GaussianSet,
    concat,
    crop_to_bounds,
    init_block_gaussians,
    initial_log_scales,
    logit,
    sigmoid,
)
from .ply import SH_C0, read_ply, write_ply

__all__ = [
    "PARAM_GROUPS",
    "GaussianSet",
    "BlockGaussianState",
    "concat",
    "crop_to_bounds",
    "init_block_gaussians",
    "initial_log_scales",
    "logit",
    "sigmoid",
    "SH_C0",
    "read_ply",
    "write_ply",
]
