"""
BlockSplat SfM Types

In-memory model of a sparse reconstruction: cameras, posed views, track
points and optional depth priors.
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional

import numpy as np


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    camera_id: int = 0
    model: str = "PINHOLE"

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    def scaled(self, factor: int) -> "CameraIntrinsics":
        """Intrinsics of the image downsampled by an integer factor."""
        if factor == 1:
            return self
        return CameraIntrinsics(
            width=self.width // factor,
            height=self.height // factor,
            fx=self.fx / factor,
            fy=self.fy / factor,
            cx=self.cx / factor,
            cy=self.cy / factor,
            camera_id=self.camera_id,
            model=self.model,
        )


@dataclass(frozen=True)
class Pose:
    """World-to-camera rigid transform ``x_cam = R @ x_world + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    @property
    def camera_center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        return (points - self.translation) @ self.rotation


def is_rotation(matrix: np.ndarray, tol: float = 1e-6) -> bool:
    """True when ``matrix`` is orthonormal with determinant +1."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (3, 3) or not np.all(np.isfinite(matrix)):
        return False
    if np.max(np.abs(matrix @ matrix.T - np.eye(3))) > tol:
        return False
    return abs(np.linalg.det(matrix) - 1.0) <= tol


@dataclass
class ViewRecord:
    """
    One registered image.

    ``keypoints`` and ``keypoint_point_ids`` keep the 2D observations of the
    source reconstruction (``-1`` marks an untracked keypoint) so the model
    can be written back without losing track indices.
    """

    view_id: int
    intrinsics_id: int
    rotation: np.ndarray
    translation: np.ndarray
    image_path: str
    visible_point_ids: FrozenSet[int] = field(default_factory=frozenset)
    keypoints: Optional[np.ndarray] = None
    keypoint_point_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        self.visible_point_ids = frozenset(int(i) for i in self.visible_point_ids)
        if not is_rotation(self.rotation):
            raise ValueError(f"view {self.view_id}: rotation is not a proper rotation matrix")

    @property
    def pose(self) -> Pose:
        return Pose(self.rotation, self.translation)


@dataclass
class SparsePoint:
    """One SfM track point."""

    point_id: int
    position: np.ndarray
    color: np.ndarray
    observing_view_ids: FrozenSet[int]
    error: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(3)
        self.observing_view_ids = frozenset(int(i) for i in self.observing_view_ids)
        if not np.all(np.isfinite(self.position)):
            raise ValueError(f"point {self.point_id}: position is not finite")
        if not self.observing_view_ids:
            raise ValueError(f"point {self.point_id}: no observing views")


@dataclass
class SparseModel:
    """Cameras, views and points of one reconstruction, keyed by id."""

    cameras: Dict[int, CameraIntrinsics]
    views: Dict[int, ViewRecord]
    points: Dict[int, SparsePoint]

    def camera_for(self, view: ViewRecord) -> CameraIntrinsics:
        return self.cameras[view.intrinsics_id]

    def point_ids(self) -> np.ndarray:
        return np.array(sorted(self.points), dtype=np.int64)

    def point_array(self, ids=None) -> np.ndarray:
        """Positions as an (n, 3) array in ascending id order (or ``ids`` order)."""
        if ids is None:
            ids = sorted(self.points)
        if len(ids) == 0:
            return np.zeros((0, 3))
        return np.stack([self.points[int(i)].position for i in ids])

    def color_array(self, ids=None) -> np.ndarray:
        if ids is None:
            ids = sorted(self.points)
        if len(ids) == 0:
            return np.zeros((0, 3))
        return np.stack([self.points[int(i)].color for i in ids])

    def camera_centers(self) -> np.ndarray:
        if not self.views:
            return np.zeros((0, 3))
        return np.stack([self.views[v].pose.camera_center for v in sorted(self.views)])

    def is_close(self, other: "SparseModel", atol: float = 1e-6) -> bool:
        """Structural equality: exact on ids and sets, ``atol`` on floats."""
        if set(self.cameras) != set(other.cameras):
            return False
        if set(self.views) != set(other.views) or set(self.points) != set(other.points):
            return False

        for cid, cam in self.cameras.items():
            o = other.cameras[cid]
            if (cam.width, cam.height) != (o.width, o.height):
                return False
            if not np.allclose([cam.fx, cam.fy, cam.cx, cam.cy], [o.fx, o.fy, o.cx, o.cy], atol=atol, rtol=0):
                return False

        for vid, view in self.views.items():
            o = other.views[vid]
            if view.intrinsics_id != o.intrinsics_id or view.image_path != o.image_path:
                return False
            if view.visible_point_ids != o.visible_point_ids:
                return False
            if not np.allclose(view.rotation, o.rotation, atol=atol, rtol=0):
                return False
            if not np.allclose(view.translation, o.translation, atol=atol, rtol=0):
                return False

        for pid, point in self.points.items():
            o = other.points[pid]
            if point.observing_view_ids != o.observing_view_ids:
                return False
            if not np.allclose(point.position, o.position, atol=atol, rtol=0):
                return False
            if not np.allclose(point.color, o.color, atol=atol, rtol=0):
                return False
        return True


@dataclass
class DepthPrior:
    """
    Per-view depth prior.

    Invalid pixels hold ``nan``; ``valid`` is the mask of finite positive
    entries. A prior with ``source == "none"`` carries no data and disables
    the depth term for its view.
    """

    view_id: int
    depth: Optional[np.ndarray]
    source: str = "file"

    @property
    def valid(self) -> np.ndarray:
        if self.depth is None:
            return np.zeros((0, 0), dtype=bool)
        return np.isfinite(self.depth) & (self.depth > 0)

    @classmethod
    def none(cls, view_id: int) -> "DepthPrior":
        return cls(view_id=view_id, depth=None, source="none")
