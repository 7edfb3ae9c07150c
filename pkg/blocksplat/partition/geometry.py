"""
BlockSplat Partition Geometry

Ground-plane rectangles, up-axis alignment and region-of-interest estimation.
"""

from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Sequence

import numpy as np

from ..config import PartitionConfig
from ..exceptions import DegenerateGeometry, EmptyRoi
from ..sfm.types import SparseModel
from ..utils import get_logger

logger = get_logger(__name__)

# Rotations taking each explicit up axis onto +y
AXIS_ALIGNMENTS = {
    "+y": np.eye(3),
    "-y": np.diag([1.0, -1.0, -1.0]),
    "+z": np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]]),
    "-z": np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
    "+x": np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
    "-x": np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
}

RANSAC_ITERATIONS = 256
RANSAC_SEED = 0
GROUND_FRACTION = 0.3
ROI_QUANTILE = 0.02


@dataclass(frozen=True)
class Rect:
    """
    Axis-aligned rectangle on the aligned x-z ground plane.

    Upper edges are always closed. A lower edge is open when the rectangle
    is the upper half of a split, so a point on a split line belongs to the
    lower child only.
    """

    x_min: float
    x_max: float
    z_min: float
    z_max: float
    x_min_open: bool = False
    z_min_open: bool = False

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def depth(self) -> float:
        return self.z_max - self.z_min

    @property
    def area(self) -> float:
        return self.width * self.depth

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.depth))

    def contains(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        z = np.asarray(z)
        in_x = (x > self.x_min) if self.x_min_open else (x >= self.x_min)
        in_z = (z > self.z_min) if self.z_min_open else (z >= self.z_min)
        return in_x & (x <= self.x_max) & in_z & (z <= self.z_max)

    def split(self, axis: str):
        """Bisect along ``axis`` ("x" or "z"); returns (coordinate, lower, upper)."""
        if axis == "x":
            mid = (self.x_min + self.x_max) / 2.0
            lower = replace(self, x_max=mid)
            upper = replace(self, x_min=mid, x_min_open=True)
        else:
            mid = (self.z_min + self.z_max) / 2.0
            lower = replace(self, z_max=mid)
            upper = replace(self, z_min=mid, z_min_open=True)
        return mid, lower, upper

    def longer_axis(self) -> str:
        return "x" if self.width >= self.depth else "z"

    def as_tuple(self):
        return (self.x_min, self.x_max, self.z_min, self.z_max)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "z_min": self.z_min,
            "z_max": self.z_max,
            "x_min_open": self.x_min_open,
            "z_min_open": self.z_min_open,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Rect":
        return cls(
            x_min=float(data["x_min"]),
            x_max=float(data["x_max"]),
            z_min=float(data["z_min"]),
            z_max=float(data["z_max"]),
            x_min_open=bool(data.get("x_min_open", False)),
            z_min_open=bool(data.get("z_min_open", False)),
        )

    @classmethod
    def from_bounds(cls, bounds: Sequence[float]) -> "Rect":
        x_min, x_max, z_min, z_max = (float(v) for v in bounds)
        return cls(x_min, x_max, z_min, z_max)


def ground_coordinates(points: np.ndarray, alignment: np.ndarray):
    """Return the aligned (x, z) ground coordinates of world points."""
    aligned = np.asarray(points, dtype=np.float64).reshape(-1, 3) @ np.asarray(alignment).T
    return aligned[:, 0], aligned[:, 2]


def rotation_to_y(normal: np.ndarray) -> np.ndarray:
    """Smallest rotation taking the unit vector ``normal`` onto +y."""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    y = np.array([0.0, 1.0, 0.0])
    v = np.cross(n, y)
    s = np.linalg.norm(v)
    c = float(n @ y)
    if s < 1e-12:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    vx = np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])
    return np.eye(3) + vx + vx @ vx * ((1.0 - c) / (s * s))


def _check_spread(points: np.ndarray):
    if len(points) < 3:
        raise DegenerateGeometry(f"need at least 3 points to estimate a ground plane, got {len(points)}")
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] <= 1e-12 or sv[1] <= 1e-9 * sv[0]:
        raise DegenerateGeometry("points are coincident or collinear")


def _orient(normal: np.ndarray, points: np.ndarray, camera_centers: np.ndarray) -> np.ndarray:
    """Flip ``normal`` toward the cameras, or toward its largest component when there are none."""
    if len(camera_centers):
        side = float((camera_centers.mean(axis=0) - points.mean(axis=0)) @ normal)
        if abs(side) > 1e-12:
            return normal if side > 0 else -normal
    k = int(np.argmax(np.abs(normal)))
    return normal if normal[k] > 0 else -normal


def fit_ground_normal(points: np.ndarray, camera_centers: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Estimate the upward ground-plane normal of a point cloud.

    The smallest principal axis gives a first up direction; a RANSAC plane
    fit over the lowest 30% of points along it, refined by SVD over the
    inliers, gives the final normal.
    """
    points = np.asarray(points, dtype=np.float64)
    _check_spread(points)
    if camera_centers is None:
        camera_centers = np.zeros((0, 3))

    centered = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    up = _orient(vt[2], points, camera_centers)

    elevation = points @ up
    count = max(3, int(np.ceil(GROUND_FRACTION * len(points))))
    order = np.argsort(elevation, kind="stable")
    ground = points[order[:count]]

    lo, hi = points.min(axis=0), points.max(axis=0)
    threshold = 0.01 * float(np.linalg.norm(hi - lo))

    rng = np.random.default_rng(RANSAC_SEED)
    best_inliers = None
    best_count = -1
    for _ in range(RANSAC_ITERATIONS):
        sample = ground[rng.choice(len(ground), size=3, replace=False)]
        n = np.cross(sample[1] - sample[0], sample[2] - sample[0])
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            continue
        n = n / norm
        inliers = np.abs((ground - sample[0]) @ n) <= threshold
        n_in = int(inliers.sum())
        if n_in > best_count:
            best_count = n_in
            best_inliers = inliers

    if best_inliers is None or best_count < 3:
        normal = up
    else:
        inlier_pts = ground[best_inliers]
        _, sv, vt = np.linalg.svd(inlier_pts - inlier_pts.mean(axis=0), full_matrices=False)
        normal = vt[2] if sv[1] > 1e-12 else up

    if normal @ up < 0:
        normal = -normal
    return normal / np.linalg.norm(normal)


def estimate_alignment(model: SparseModel, cfg: PartitionConfig) -> np.ndarray:
    """
    Rotation mapping the scene's up direction onto +y.

    Args:
        model: Sparse reconstruction
        cfg: Partition settings; an explicit ``up_axis`` gives an exact axis permutation

    Returns:
        3x3 rotation matrix applied as ``aligned = R @ world``
    """
    if cfg.up_axis != "auto":
        return AXIS_ALIGNMENTS[cfg.up_axis].copy()

    normal = fit_ground_normal(model.point_array(), model.camera_centers())
    alignment = rotation_to_y(normal)
    logger.info(f"Estimated ground normal {np.round(normal, 4).tolist()}")
    return alignment


def compute_roi(model: SparseModel, alignment: np.ndarray, cfg: PartitionConfig) -> Rect:
    """
    Region of interest on the aligned ground plane.

    A manual ``cfg.roi`` passes through unchanged. In auto mode the
    rectangle spans the 2% to 98% quantiles of the aligned x and z
    coordinates.
    """
    x, z = ground_coordinates(model.point_array(), alignment)

    if cfg.roi != "auto":
        roi = Rect.from_bounds(cfg.roi)
        if not np.any(roi.contains(x, z)):
            raise EmptyRoi(f"No sparse point inside the manual roi {roi.as_tuple()}")
        return roi

    if len(x) == 0:
        raise EmptyRoi("Model has no sparse points")
    x_min, x_max = np.quantile(x, [ROI_QUANTILE, 1.0 - ROI_QUANTILE])
    z_min, z_max = np.quantile(z, [ROI_QUANTILE, 1.0 - ROI_QUANTILE])
    roi = Rect(float(x_min), float(x_max), float(z_min), float(z_max))
    if not (roi.width > 0 and roi.depth > 0):
        raise DegenerateGeometry(f"Automatic roi has zero area: {roi.as_tuple()}")
    return roi
