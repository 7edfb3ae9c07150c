"""
BlockSplat Densification

Gradient statistics, clone/split of block Gaussians and opacity pruning
of both sets. Auxiliary Gaussians are never densified.
"""

from dataclasses import dataclass

import numpy as np

from ..config import TrainConfig
from ..gaussians.model import BlockGaussianState, GaussianSet, concat, logit
from ..render.projection import quaternion_to_rotation
from ..render.rasterizer import GradientSet
from ..utils import get_logger

logger = get_logger(__name__)

SPLIT_CHILDREN = 2
SPLIT_SCALE_DIVISOR = 1.6
RESET_OPACITY = 0.01


class DensifyStats:
    """Accumulated screen-space gradient norms of the block Gaussians."""

    __slots__ = ("grad_accum", "denom")

    def __init__(self, n: int):
        self.grad_accum = np.zeros(n)
        self.denom = np.zeros(n)

    def add(self, grads: GradientSet):
        """Add one view's statistics; only primitives that hit a pixel count."""
        hit = grads.visible
        self.grad_accum[hit] += grads.screen_grad_norm[hit]
        self.denom[hit] += 1

    def mean(self) -> np.ndarray:
        out = np.zeros_like(self.grad_accum)
        seen = self.denom > 0
        out[seen] = self.grad_accum[seen] / self.denom[seen]
        return out

    def reset(self, n: int):
        self.grad_accum = np.zeros(n)
        self.denom = np.zeros(n)


@dataclass
class DensifyResult:
    """
    New state and, per new primitive, its index in the old set (-1 if new).
    """

    state: BlockGaussianState
    block_origin: np.ndarray
    aux_origin: np.ndarray
    n_cloned: int = 0
    n_split: int = 0
    n_pruned: int = 0


def _split_children(parents: GaussianSet, rng: np.random.Generator) -> GaussianSet:
    n = len(parents)
    reps = np.repeat(np.arange(n), SPLIT_CHILDREN)
    stds = parents.scales[reps]
    samples = rng.normal(size=stds.shape) * stds
    rotations = quaternion_to_rotation(parents.unit_rotations[reps])
    positions = np.einsum("nij,nj->ni", rotations, samples) + parents.positions[reps]
    return GaussianSet(
        positions=positions,
        rotations=parents.rotations[reps],
        log_scales=parents.log_scales[reps] - np.log(SPLIT_SCALE_DIVISOR),
        opacity_logits=parents.opacity_logits[reps],
        colors=parents.colors[reps],
    )


def densify_and_prune(
    state: BlockGaussianState,
    stats: DensifyStats,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> DensifyResult:
    """
    Clone or split high-gradient block Gaussians, then prune transparent ones.

    A block primitive whose mean screen-gradient norm exceeds
    ``cfg.densify_grad_threshold`` is cloned when its largest scale is at most
    ``cfg.split_scale_threshold`` times the block diagonal, otherwise it is
    replaced by two children sampled from it with scales divided by 1.6.
    Primitives of either set with opacity below
    ``cfg.prune_opacity_threshold`` are removed afterwards.
    """
    block = state.block
    grads = stats.mean()
    selected = grads > cfg.densify_grad_threshold
    small = block.scales.max(axis=1) <= cfg.split_scale_threshold * state.block_bounds.diagonal
    clone = selected & small
    split = selected & ~small

    keep_idx = np.flatnonzero(~split)
    clone_idx = np.flatnonzero(clone)
    children = _split_children(block.subset(split), rng)

    dense = concat([block.subset(keep_idx), block.subset(clone_idx), children])
    origin = np.concatenate([keep_idx, clone_idx, np.full(len(children), -1)])

    block_keep = dense.opacities >= cfg.prune_opacity_threshold
    aux_keep = state.auxiliary.opacities >= cfg.prune_opacity_threshold
    n_pruned = int((~block_keep).sum() + (~aux_keep).sum())

    new_state = BlockGaussianState(
        block_id=state.block_id,
        block=dense.subset(block_keep),
        auxiliary=state.auxiliary.subset(aux_keep),
        block_bounds=state.block_bounds,
        alignment=state.alignment,
    )
    logger.debug(
        f"Block {state.block_id}: cloned {len(clone_idx)}, split {int(split.sum())}, pruned {n_pruned}; "
        f"{len(new_state.block)} block / {len(new_state.auxiliary)} auxiliary"
    )
    return DensifyResult(
        state=new_state,
        block_origin=origin[block_keep],
        aux_origin=np.flatnonzero(aux_keep),
        n_cloned=len(clone_idx),
        n_split=int(split.sum()),
        n_pruned=n_pruned,
    )


def reset_opacity(gaussians: GaussianSet) -> np.ndarray:
    """Clamp opacities to at most 0.01 in place; returns the changed mask."""
    ceiling = float(logit(RESET_OPACITY))
    changed = gaussians.opacity_logits > ceiling
    gaussians.opacity_logits[changed] = ceiling
    return changed
