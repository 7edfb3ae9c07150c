"""
BlockSplat Gaussian Model

Columnar Gaussian primitive storage, per-block initialization from sparse
points, spatial cropping and concatenation.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from ..exceptions import EmptyBlock, NoViews
from ..partition.geometry import Rect, ground_coordinates
from ..partition.planner import Block, BlockPlan
from ..sfm.types import SparseModel
from ..utils import get_logger

logger = get_logger(__name__)

PARAM_GROUPS = ("positions", "rotations", "log_scales", "opacity_logits", "colors")

INITIAL_OPACITY = 0.1
NEIGHBORS = 3


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))


class GaussianSet:
    """
    Columnar collection of Gaussian primitives.

    Columns are float64 arrays: ``positions`` (n, 3) world units,
    ``rotations`` (n, 4) quaternions (w, x, y, z), ``log_scales`` (n, 3),
    ``opacity_logits`` (n,) and ``colors`` (n, 3) degree-0 RGB.
    Quaternions may drift off unit length during optimization; every
    consumer normalizes them.
    """

    __slots__ = PARAM_GROUPS

    def __init__(self, positions, rotations, log_scales, opacity_logits, colors):
        self.positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        n = len(self.positions)
        self.rotations = np.asarray(rotations, dtype=np.float64).reshape(n, 4)
        self.log_scales = np.asarray(log_scales, dtype=np.float64).reshape(n, 3)
        self.opacity_logits = np.asarray(opacity_logits, dtype=np.float64).reshape(n)
        self.colors = np.asarray(colors, dtype=np.float64).reshape(n, 3)

    def __len__(self) -> int:
        return len(self.positions)

    def __repr__(self) -> str:
        return f"GaussianSet(n={len(self)})"

    @classmethod
    def empty(cls) -> "GaussianSet":
        return cls(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3)))

    @classmethod
    def random(
        cls,
        n: int,
        rng: np.random.Generator,
        low=(-1.0, -1.0, -1.0),
        high=(1.0, 1.0, 1.0),
        scale_range=(0.05, 0.2),
        opacity_range=(0.2, 0.9),
        color_range=(0.0, 1.0),
    ) -> "GaussianSet":
        """Uniformly random primitives inside an axis-aligned box."""
        positions = rng.uniform(low, high, size=(n, 3))
        rotations = rng.normal(size=(n, 4))
        rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
        log_scales = np.log(rng.uniform(scale_range[0], scale_range[1], size=(n, 3)))
        opacity_logits = logit(rng.uniform(opacity_range[0], opacity_range[1], size=n))
        colors = rng.uniform(color_range[0], color_range[1], size=(n, 3))
        return cls(positions, rotations, log_scales, opacity_logits, colors)

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    @property
    def unit_rotations(self) -> np.ndarray:
        return self.rotations / np.linalg.norm(self.rotations, axis=1, keepdims=True)

    def columns(self):
        return [getattr(self, name) for name in PARAM_GROUPS]

    def copy(self) -> "GaussianSet":
        return GaussianSet(*(c.copy() for c in self.columns()))

    def subset(self, selector) -> "GaussianSet":
        """Primitives selected by a boolean mask or index array, order preserved."""
        return GaussianSet(*(c[selector] for c in self.columns()))

    def equals(self, other: "GaussianSet") -> bool:
        return len(self) == len(other) and all(
            np.array_equal(a, b) for a, b in zip(self.columns(), other.columns())
        )


def concat(sets: Sequence[GaussianSet]) -> GaussianSet:
    """Column-wise concatenation in list order."""
    sets = list(sets)
    if not sets:
        return GaussianSet.empty()
    return GaussianSet(*(np.concatenate(cols) for cols in zip(*(s.columns() for s in sets))))


def crop_to_bounds(gaussians: GaussianSet, bounds: Rect, alignment: Optional[np.ndarray] = None) -> GaussianSet:
    """Keep primitives whose aligned ground position lies inside ``bounds``."""
    if alignment is None:
        alignment = np.eye(3)
    x, z = ground_coordinates(gaussians.positions, alignment)
    return gaussians.subset(bounds.contains(x, z))


@dataclass
class BlockGaussianState:
    """
    Trainable block Gaussians plus auxiliary Gaussians of one block.

    Membership is carried by which set a primitive lives in; the renderer
    orders the block set before the auxiliary set.
    """

    block_id: int
    block: GaussianSet
    auxiliary: GaussianSet
    block_bounds: Rect
    alignment: np.ndarray

    @property
    def membership(self) -> np.ndarray:
        """Per-primitive tag in render order: 0 for block, 1 for auxiliary."""
        return np.concatenate([np.zeros(len(self.block), dtype=np.int8), np.ones(len(self.auxiliary), dtype=np.int8)])

    def copy(self) -> "BlockGaussianState":
        return BlockGaussianState(
            block_id=self.block_id,
            block=self.block.copy(),
            auxiliary=self.auxiliary.copy(),
            block_bounds=self.block_bounds,
            alignment=np.array(self.alignment),
        )


def initial_log_scales(positions: np.ndarray, fallback: float) -> np.ndarray:
    """
    Isotropic log scales from the mean distance to the 3 nearest neighbors.

    Primitives without any neighbor get ``log(fallback)``.
    """
    n = len(positions)
    if n == 0:
        return np.zeros((0, 3))
    mean_dist = np.full(n, fallback)
    if n > 1:
        k = min(NEIGHBORS, n - 1) + 1
        dist, _ = cKDTree(positions).query(positions, k=k)
        neighbor = dist[:, 1:]
        mean_dist = np.maximum(neighbor.mean(axis=1), 1e-7)
    return np.repeat(np.log(mean_dist)[:, None], 3, axis=1)


def _from_points(positions: np.ndarray, colors: np.ndarray, log_scales: np.ndarray) -> GaussianSet:
    n = len(positions)
    rotations = np.zeros((n, 4))
    rotations[:, 0] = 1.0
    opacity_logits = np.full(n, float(logit(INITIAL_OPACITY)))
    return GaussianSet(positions, rotations, log_scales, opacity_logits, colors)


def init_block_gaussians(
    model: SparseModel,
    block: Block,
    plan: BlockPlan,
    use_auxiliary: bool = True,
) -> BlockGaussianState:
    """
    Initialize block and auxiliary Gaussians from the sparse points.

    Block Gaussians come from points inside the block bounds. Auxiliary
    Gaussians come from points outside the bounds that at least one
    assigned view observes.

    Args:
        model: Sparse reconstruction
        block: Leaf block with assigned views
        plan: Plan the block belongs to (for the alignment)
        use_auxiliary: When false the auxiliary set is left empty

    Returns:
        BlockGaussianState ready for optimization
    """
    if not block.assigned_view_ids:
        raise NoViews(block.block_id)

    point_ids = sorted(model.points)
    positions = model.point_array(point_ids)
    colors = model.color_array(point_ids)
    x, z = ground_coordinates(positions, plan.alignment)
    inside = block.bounds.contains(x, z)
    if not np.any(inside):
        raise EmptyBlock(block.block_id)

    assigned = set(block.assigned_view_ids)
    observed = np.array([bool(model.points[pid].observing_view_ids & assigned) for pid in point_ids], dtype=bool)
    outside = (~inside) & observed if use_auxiliary else np.zeros_like(inside)

    chosen = np.concatenate([np.flatnonzero(inside), np.flatnonzero(outside)])
    log_scales = initial_log_scales(positions[chosen], fallback=0.01 * block.bounds.diagonal)
    n_block = int(inside.sum())

    state = BlockGaussianState(
        block_id=block.block_id,
        block=_from_points(positions[inside], colors[inside], log_scales[:n_block]),
        auxiliary=_from_points(positions[outside], colors[outside], log_scales[n_block:]),
        block_bounds=block.bounds,
        alignment=np.asarray(plan.alignment, dtype=np.float64),
    )
    logger.info(f"Block {block.block_id}: {len(state.block)} block and {len(state.auxiliary)} auxiliary Gaussians")
    return state
