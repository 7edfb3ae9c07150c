"""
BlockSplat Merge

Joins optimized blocks into one scene: auxiliary Gaussians are dropped,
block Gaussians are cropped to their block bounds and concatenated in
block id order.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..exceptions import PlanMismatch
from ..gaussians.model import BlockGaussianState, GaussianSet, concat, crop_to_bounds
from ..partition.planner import BlockPlan
from ..utils import get_logger

logger = get_logger(__name__)


@dataclass
class SceneModel:
    """Merged Gaussians with the block id each primitive came from."""

    gaussians: GaussianSet
    provenance: np.ndarray

    def __len__(self) -> int:
        return len(self.gaussians)

    def block_counts(self):
        ids, counts = np.unique(self.provenance, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}


def _check_states(states: Sequence[BlockGaussianState], plan: Optional[BlockPlan]):
    ids = [s.block_id for s in states]
    if len(set(ids)) != len(ids):
        raise PlanMismatch(f"Duplicate block ids: {sorted(ids)}")
    alignment = np.asarray(states[0].alignment)
    for state in states[1:]:
        if not np.array_equal(np.asarray(state.alignment), alignment):
            raise PlanMismatch(f"Block {state.block_id} uses a different ground alignment")
    if plan is None:
        return
    if not np.array_equal(np.asarray(plan.alignment), alignment):
        raise PlanMismatch("Block states and plan use different ground alignments")
    known = set(plan.block_ids)
    for state in states:
        if state.block_id not in known:
            raise PlanMismatch(f"Block {state.block_id} is not part of the plan")
        if plan.block(state.block_id).bounds != state.block_bounds:
            raise PlanMismatch(f"Block {state.block_id} bounds differ from the plan")


def merge_blocks(states: Sequence[BlockGaussianState], plan: Optional[BlockPlan] = None) -> SceneModel:
    """
    Merge optimized block states into one scene.

    Args:
        states: Optimized states, any order
        plan: When given, every state must match one of its blocks

    Returns:
        SceneModel with primitives grouped by ascending block id

    Raises:
        PlanMismatch: On duplicate ids, differing alignments or foreign blocks
    """
    states = sorted(states, key=lambda s: s.block_id)
    if not states:
        return SceneModel(GaussianSet.empty(), np.zeros(0, dtype=np.int64))
    _check_states(states, plan)

    parts = []
    provenance = []
    for state in states:
        kept = crop_to_bounds(state.block, state.block_bounds, state.alignment)
        dropped = len(state.block) - len(kept)
        if dropped:
            logger.info(f"Block {state.block_id}: cropped {dropped} drifted Gaussians")
        parts.append(kept)
        provenance.append(np.full(len(kept), state.block_id, dtype=np.int64))

    scene = SceneModel(concat(parts), np.concatenate(provenance))
    logger.info(f"Merged {len(states)} blocks into {len(scene)} Gaussians")
    return scene
