"""Builders shared by the test modules"""

from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from blocksplat.gaussians.model import GaussianSet, logit
from blocksplat.sfm.types import CameraIntrinsics, Pose, SparseModel, SparsePoint, ViewRecord


def make_camera(size: int = 32, focal: float = 32.0, camera_id: int = 1) -> CameraIntrinsics:
    return CameraIntrinsics(
        width=size,
        height=size,
        fx=focal,
        fy=focal,
        cx=size / 2.0,
        cy=size / 2.0,
        camera_id=camera_id,
        model="PINHOLE",
    )


def identity_pose() -> Pose:
    return Pose(rotation=np.eye(3), translation=np.zeros(3))


def single_gaussian(position, scale=0.1, opacity=0.5, color=(1.0, 1.0, 1.0)) -> GaussianSet:
    return GaussianSet(
        positions=[position],
        rotations=[[1.0, 0.0, 0.0, 0.0]],
        log_scales=np.log(np.full((1, 3), scale)),
        opacity_logits=[float(logit(opacity))],
        colors=[color],
    )


def random_scene(rng: np.random.Generator, n: int, size: int = 32) -> GaussianSet:
    """Random primitives in front of an identity camera, mostly on screen."""
    positions = np.column_stack([
        rng.uniform(-1.2, 1.2, n),
        rng.uniform(-1.2, 1.2, n),
        rng.uniform(2.0, 6.0, n),
    ])
    rotations = rng.normal(size=(n, 4))
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    log_scales = np.log(rng.uniform(0.05, 0.4, size=(n, 3)))
    opacity_logits = logit(rng.uniform(0.1, 0.95, n))
    colors = rng.uniform(0.0, 1.0, size=(n, 3))
    return GaussianSet(positions, rotations, log_scales, opacity_logits, colors)


def make_model(
    positions: np.ndarray,
    visibility: Dict[int, Iterable[int]],
    cam: Optional[CameraIntrinsics] = None,
    poses: Optional[Dict[int, Pose]] = None,
    colors: Optional[np.ndarray] = None,
) -> SparseModel:
    """
    SparseModel with point ids 1..n and the given ``view_id -> point ids`` map.

    Points seen by no view are left out.
    """
    cam = cam or make_camera()
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if colors is None:
        colors = np.full((len(positions), 3), 0.5)

    views = {}
    observers: Dict[int, set] = {}
    for view_id, point_ids in sorted(visibility.items()):
        point_ids = frozenset(int(p) for p in point_ids)
        pose = (poses or {}).get(view_id, identity_pose())
        views[view_id] = ViewRecord(
            view_id=view_id,
            intrinsics_id=cam.camera_id,
            rotation=pose.rotation,
            translation=pose.translation,
            image_path=f"view_{view_id:03d}.png",
            visible_point_ids=point_ids,
        )
        for pid in point_ids:
            observers.setdefault(pid, set()).add(view_id)

    points = {
        pid: SparsePoint(
            point_id=pid,
            position=positions[pid - 1],
            color=colors[pid - 1],
            observing_view_ids=frozenset(observers[pid]),
        )
        for pid in sorted(observers)
    }
    return SparseModel(cameras={cam.camera_id: cam}, views=views, points=points)


def grid_positions(n_side: int = 32, extent: float = 4.0) -> np.ndarray:
    """Cell centres of an ``n_side`` x ``n_side`` grid on the y = 0 ground plane."""
    step = extent / n_side
    coords = (np.arange(n_side) + 0.5) * step
    xs, zs = np.meshgrid(coords, coords, indexing="ij")
    return np.column_stack([xs.ravel(), np.zeros(xs.size), zs.ravel()])


def seen_by_all(n_points: int, view_ids: Sequence[int]) -> Dict[int, range]:
    return {v: range(1, n_points + 1) for v in view_ids}
