"""
BlockSplat Scene

Block merging, evaluation metrics and synthetic scenes.
"""

from .merge import SceneModel, merge_blocks
from .metrics import EvalItem, EvalReport, airspace_opacity, evaluate_views, psnr
from .synthetic import SyntheticScene, generate_synthetic_scene, look_at
from ..losses.ssim import ssim_metric

__all__ = [
    "EvalItem",
    "EvalReport",
    "SceneModel",
    "SyntheticScene",
    "airspace_opacity",
    "evaluate_views",
    "generate_synthetic_scene",
    "look_at",
    "merge_blocks",
    "psnr",
    "ssim_metric",
]
