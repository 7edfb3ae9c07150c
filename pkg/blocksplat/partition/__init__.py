"""
BlockSplat Partition

Content-aware scene partitioning and view assignment.
"""

from .geometry import Rect, compute_roi, estimate_alignment, fit_ground_normal, ground_coordinates, rotation_to_y
from .planner import Block, BlockPlan, ViewBlockScore, assign_views, partition, plan_scene

__all__ = [
    "Rect",
    "Block",
    "BlockPlan",
    "ViewBlockScore",
    "estimate_alignment",
    "compute_roi",
    "fit_ground_normal",
    "ground_coordinates",
    "rotation_to_y",
    "partition",
    "assign_views",
    "plan_scene",
]
