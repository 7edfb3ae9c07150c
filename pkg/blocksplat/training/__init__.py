"""
BlockSplat Training

Per-block optimization: Adam, loss-weight schedules, densification and
the mini-batch training loop.
"""

from .adam import Adam
from .densify import DensifyResult, DensifyStats, densify_and_prune, reset_opacity
from .schedule import log_lerp, position_lr, schedule_weights
from .trainer import BlockTrainer, TrainingLog, TrainingRecord, TrainingView, optimize_block, spatial_scale

__all__ = [
    "Adam",
    "BlockTrainer",
    "DensifyResult",
    "DensifyStats",
    "TrainingLog",
    "TrainingRecord",
    "TrainingView",
    "densify_and_prune",
    "log_lerp",
    "optimize_block",
    "position_lr",
    "reset_opacity",
    "schedule_weights",
    "spatial_scale",
]
