"""
BlockSplat Schedules

Log-space interpolation for learning rates and loss weights.
"""

from typing import Tuple

import numpy as np

from ..config import TrainConfig


def log_lerp(start: float, end: float, fraction: float) -> float:
    """``start`` at 0, ``end`` at 1, interpolated in log space."""
    fraction = float(np.clip(fraction, 0.0, 1.0))
    if fraction == 0.0:
        return float(start)
    if fraction == 1.0:
        return float(end)
    if start == 0.0 or end == 0.0:
        return float(start + (end - start) * fraction)
    return float(np.exp(np.log(start) * (1.0 - fraction) + np.log(end) * fraction))


def position_lr(t: int, cfg: TrainConfig, spatial_scale: float = 1.0) -> float:
    """Exponentially decayed position learning rate at iteration ``t``."""
    fraction = t / cfg.iterations if cfg.iterations else 1.0
    return log_lerp(cfg.position_lr_init, cfg.position_lr_final, fraction) * spatial_scale


def schedule_weights(t: int, cfg: TrainConfig) -> Tuple[float, float]:
    """
    Depth and pseudo-view loss weights at iteration ``t``.

    The depth weight decays from ``depth_weight_init`` at 0 to
    ``depth_weight_final`` at ``cfg.iterations``. The pseudo-view weight is 0
    before ``cfg.pseudo_start``, then grows from ``pseudo_weight_init`` to
    ``pseudo_weight_final`` at ``cfg.iterations``.
    """
    total = cfg.iterations
    if t <= 0:
        depth_weight = cfg.depth_weight_init
    elif t >= total:
        depth_weight = cfg.depth_weight_final
    else:
        depth_weight = log_lerp(cfg.depth_weight_init, cfg.depth_weight_final, t / total)

    start = cfg.pseudo_start
    if t < start:
        pseudo_weight = 0.0
    elif t >= total:
        pseudo_weight = cfg.pseudo_weight_final
    elif t == start:
        pseudo_weight = cfg.pseudo_weight_init
    else:
        pseudo_weight = log_lerp(cfg.pseudo_weight_init, cfg.pseudo_weight_final, (t - start) / (total - start))

    return float(depth_weight), float(pseudo_weight)
