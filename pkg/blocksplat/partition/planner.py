"""
BlockSplat Partition Planner

Density-driven binary space partition of the region of interest and the
assignment of supervising views to each leaf block.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import orjson

from ..config import PartitionConfig
from ..exceptions import ConfigurationError, UnreadableFile
from ..sfm.types import SparseModel
from ..utils import get_logger
from .geometry import Rect, compute_roi, estimate_alignment, ground_coordinates

logger = get_logger(__name__)

_JSON_OPTS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


@dataclass
class Block:
    """One leaf of the partition tree."""

    block_id: int
    bounds: Rect
    depth: int
    point_count: int
    assigned_view_ids: List[int] = field(default_factory=list)

    @property
    def is_supervised(self) -> bool:
        return len(self.assigned_view_ids) > 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "block_id": self.block_id,
            "bounds": self.bounds.to_dict(),
            "depth": self.depth,
            "point_count": self.point_count,
            "assigned_view_ids": list(self.assigned_view_ids),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Block":
        return cls(
            block_id=int(data["block_id"]),
            bounds=Rect.from_dict(data["bounds"]),
            depth=int(data["depth"]),
            point_count=int(data["point_count"]),
            assigned_view_ids=[int(v) for v in data.get("assigned_view_ids", [])],
        )


@dataclass(frozen=True)
class ViewBlockScore:
    """Share of a view's track points that fall inside one block."""

    view_id: int
    block_id: int
    in_block_count: int
    total_visible: int

    @property
    def ratio(self) -> float:
        return self.in_block_count / self.total_visible


@dataclass
class BlockPlan:
    """
    Output of the partitioner.

    ``tree`` is a nested dictionary of split records: internal nodes hold
    ``axis``, ``coordinate`` and ``children`` (lower child first), leaves
    hold ``block_id``.
    """

    alignment: np.ndarray
    roi: Rect
    blocks: List[Block]
    tree: Dict[str, Any]

    def block(self, block_id: int) -> Block:
        for block in self.blocks:
            if block.block_id == block_id:
                return block
        raise KeyError(block_id)

    @property
    def block_ids(self) -> List[int]:
        return [b.block_id for b in self.blocks]

    def ground(self, points: np.ndarray):
        return ground_coordinates(points, self.alignment)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Leaf block id for every world point, -1 outside the roi."""
        x, z = self.ground(points)
        result = np.full(len(x), -1, dtype=np.int64)
        for block in self.blocks:
            result[block.bounds.contains(x, z)] = block.block_id
        return result

    def summary(self) -> Dict[str, float]:
        """Block count with mean/max assigned views and points per block."""
        views = np.array([len(b.assigned_view_ids) for b in self.blocks], dtype=np.float64)
        points = np.array([b.point_count for b in self.blocks], dtype=np.float64)
        return {
            "n_blocks": len(self.blocks),
            "n_views_mean": float(views.mean()) if len(views) else 0.0,
            "n_views_max": int(views.max()) if len(views) else 0,
            "n_points_mean": float(points.mean()) if len(points) else 0.0,
            "n_points_max": int(points.max()) if len(points) else 0,
            "n_points_total": int(points.sum()),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alignment": np.asarray(self.alignment).tolist(),
            "roi": self.roi.to_dict(),
            "blocks": [b.to_dict() for b in self.blocks],
            "tree": self.tree,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BlockPlan":
        return cls(
            alignment=np.array(data["alignment"], dtype=np.float64).reshape(3, 3),
            roi=Rect.from_dict(data["roi"]),
            blocks=[Block.from_dict(b) for b in data["blocks"]],
            tree=data["tree"],
        )

    def write(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(orjson.dumps(self.to_dict(), option=_JSON_OPTS))

    @classmethod
    def read(cls, path: Union[str, Path]) -> "BlockPlan":
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"block plan not found: {path} (run the partition stage first)")
        try:
            return cls.from_dict(orjson.loads(path.read_bytes()))
        except (orjson.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise UnreadableFile(str(path), str(e))


def _build_tree(
    rect: Rect,
    x: np.ndarray,
    z: np.ndarray,
    depth: int,
    cfg: PartitionConfig,
    leaves: List[Block],
) -> Dict[str, Any]:
    count = len(x)
    if count > cfg.block_point_threshold and depth < cfg.max_depth:
        axis = rect.longer_axis()
        coordinate, lower, upper = rect.split(axis)
        coord = x if axis == "x" else z
        in_lower = coord <= coordinate
        return {
            "depth": depth,
            "bounds": rect.to_dict(),
            "axis": axis,
            "coordinate": coordinate,
            "children": [
                _build_tree(lower, x[in_lower], z[in_lower], depth + 1, cfg, leaves),
                _build_tree(upper, x[~in_lower], z[~in_lower], depth + 1, cfg, leaves),
            ],
        }

    block_id = len(leaves)
    leaves.append(Block(block_id=block_id, bounds=rect, depth=depth, point_count=count))
    return {"depth": depth, "bounds": rect.to_dict(), "block_id": block_id}


def partition(
    model: SparseModel,
    cfg: PartitionConfig,
    alignment: Optional[np.ndarray] = None,
    roi: Optional[Rect] = None,
) -> BlockPlan:
    """
    Recursively bisect the roi until every leaf holds few enough points.

    A node splits while it contains more than ``cfg.block_point_threshold``
    points and sits above ``cfg.max_depth``. Splits cut the longer edge at
    its midpoint (x on ties). Leaf ids follow a depth-first, lower-child-first
    walk.

    Args:
        model: Sparse reconstruction
        cfg: Partition settings
        alignment: Precomputed up-axis rotation (estimated when omitted)
        roi: Precomputed region of interest (computed when omitted)

    Returns:
        BlockPlan with empty view assignments
    """
    if alignment is None:
        alignment = estimate_alignment(model, cfg)
    if roi is None:
        roi = compute_roi(model, alignment, cfg)

    x, z = ground_coordinates(model.point_array(), alignment)
    inside = roi.contains(x, z)
    leaves: List[Block] = []
    tree = _build_tree(roi, x[inside], z[inside], 0, cfg, leaves)

    plan = BlockPlan(alignment=np.asarray(alignment, dtype=np.float64), roi=roi, blocks=leaves, tree=tree)
    logger.info(f"Partitioned {int(inside.sum())} in-roi points into {len(leaves)} blocks")
    return plan


def assign_views(
    model: SparseModel,
    plan: BlockPlan,
    cfg: PartitionConfig,
    candidate_view_ids: Optional[Iterable[int]] = None,
) -> Tuple[BlockPlan, List[ViewBlockScore]]:
    """
    Assign each view to every block holding at least ``assign_ratio_threshold``
    of its visible track points.

    Args:
        model: Sparse reconstruction
        plan: Partition with finalized leaves
        cfg: Partition settings
        candidate_view_ids: Views eligible for assignment (all views when omitted)

    Returns:
        (plan with assigned views sorted by id, scores for every view/block pair)
    """
    if candidate_view_ids is None:
        candidates = sorted(model.views)
    else:
        candidates = sorted(int(v) for v in candidate_view_ids if int(v) in model.views)

    point_ids = sorted(model.points)
    index_of = {pid: i for i, pid in enumerate(point_ids)}
    located = plan.locate(model.point_array(point_ids)) if point_ids else np.zeros(0, dtype=np.int64)

    assigned: Dict[int, List[int]] = {b.block_id: [] for b in plan.blocks}
    scores: List[ViewBlockScore] = []
    for view_id in candidates:
        visible = model.views[view_id].visible_point_ids
        n_visible = len(visible)
        if n_visible == 0:
            continue
        where = located[[index_of[pid] for pid in sorted(visible)]]
        for block in plan.blocks:
            in_block = int(np.count_nonzero(where == block.block_id))
            score = ViewBlockScore(view_id, block.block_id, in_block, n_visible)
            scores.append(score)
            if score.ratio >= cfg.assign_ratio_threshold:
                assigned[block.block_id].append(view_id)

    blocks = [replace(b, assigned_view_ids=assigned[b.block_id]) for b in plan.blocks]
    for block in blocks:
        if not block.is_supervised:
            logger.warning(f"Block {block.block_id} has no supervising views")
    return replace(plan, blocks=blocks), scores


def plan_scene(
    model: SparseModel,
    cfg: PartitionConfig,
    candidate_view_ids: Optional[Iterable[int]] = None,
) -> BlockPlan:
    """Partition and assign views in one call."""
    plan = partition(model, cfg)
    plan, _ = assign_views(model, plan, cfg, candidate_view_ids)
    return plan
