"""
BlockSplat - Block-wise Gaussian splatting for large scenes

Partition, optimize each block independently, merge.
"""

__version__ = "0.1.0"

from .config import PipelineConfig, load_config
from .exceptions import BlockSplatError
from .gaussians import BlockGaussianState, GaussianSet
from .partition import BlockPlan, plan_scene
from .render import render, render_backward
from .scene import SceneModel, merge_blocks
from .training import optimize_block

__all__ = [
    "PipelineConfig",
    "load_config",
    "BlockSplatError",
    "GaussianSet",
    "BlockGaussianState",
    "BlockPlan",
    "plan_scene",
    "render",
    "render_backward",
    "optimize_block",
    "SceneModel",
    "merge_blocks",
]
