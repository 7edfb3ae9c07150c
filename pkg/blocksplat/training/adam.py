"""
BlockSplat Adam

First/second-moment optimizer over the parameter columns of one
GaussianSet, with one learning rate per column.
"""

from typing import Dict, Optional

import numpy as np

from ..gaussians.model import PARAM_GROUPS, GaussianSet
from ..render.rasterizer import GradientSet


class Adam:
    """
    Adam state for one GaussianSet.

    Moments follow the primitives: ``remap`` carries them across
    densification and pruning, new primitives start from zero.
    """

    __slots__ = ("lrs", "beta1", "beta2", "eps", "step_count", "exp_avg", "exp_avg_sq")

    def __init__(
        self,
        gaussians: GaussianSet,
        lrs: Dict[str, float],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-15,
    ):
        missing = set(PARAM_GROUPS) - set(lrs)
        if missing:
            raise ValueError(f"Missing learning rates for {sorted(missing)}")
        self.lrs = dict(lrs)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.exp_avg = {name: np.zeros_like(getattr(gaussians, name)) for name in PARAM_GROUPS}
        self.exp_avg_sq = {name: np.zeros_like(getattr(gaussians, name)) for name in PARAM_GROUPS}

    def set_lr(self, name: str, lr: float):
        self.lrs[name] = lr

    def step(self, gaussians: GaussianSet, grads: GradientSet):
        """Update ``gaussians`` in place from ``grads``."""
        self.step_count += 1
        bias1 = 1.0 - self.beta1 ** self.step_count
        bias2 = 1.0 - self.beta2 ** self.step_count
        for name in PARAM_GROUPS:
            grad = getattr(grads, name)
            m = self.exp_avg[name]
            v = self.exp_avg_sq[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            denom = np.sqrt(v / bias2) + self.eps
            param = getattr(gaussians, name)
            param -= self.lrs[name] * (m / bias1) / denom

    def remap(self, origin: np.ndarray):
        """
        Reorder moments after the primitive set changed.

        Args:
            origin: For every primitive of the new set, its index in the old
                set, or -1 for a primitive without history
        """
        origin = np.asarray(origin, dtype=np.int64)
        fresh = origin < 0
        for store in (self.exp_avg, self.exp_avg_sq):
            for name, values in store.items():
                moved = values[np.where(fresh, 0, origin)] if len(values) else np.zeros((len(origin),) + values.shape[1:])
                moved[fresh] = 0.0
                store[name] = moved

    def reset(self, name: str, mask: Optional[np.ndarray] = None):
        """Zero the moments of one column, for all or the masked primitives."""
        for store in (self.exp_avg, self.exp_avg_sq):
            if mask is None:
                store[name][...] = 0.0
            else:
                store[name][mask] = 0.0
