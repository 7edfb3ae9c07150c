"""
BlockSplat Projection

Projection of 3D Gaussians to screen-space 2D Gaussians through a pinhole
camera, keeping the intermediate terms the backward pass needs.
"""

from dataclasses import dataclass

import numpy as np

from ..gaussians.model import GaussianSet
from ..sfm.types import CameraIntrinsics, Pose

NEAR_PLANE = 0.01
COV2D_DILATION = 0.3


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """(n, 4) unit quaternions (w, x, y, z) to (n, 3, 3) rotation matrices."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((len(q), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


@dataclass
class ProjectedGaussians:
    """
    Screen-space Gaussians that survived near-plane culling.

    ``index`` maps each row back to the input primitive. Rows are in input
    order; the rasterizer sorts them.
    """

    index: np.ndarray
    mean2d: np.ndarray
    cov2d: np.ndarray
    conic: np.ndarray
    depth: np.ndarray
    colors: np.ndarray
    opacities: np.ndarray
    cam_points: np.ndarray
    jacobian: np.ndarray
    cov_cam: np.ndarray
    rotation: np.ndarray
    scales: np.ndarray
    quat_unit: np.ndarray
    quat_norm: np.ndarray

    def __len__(self) -> int:
        return len(self.index)


def project(gaussians: GaussianSet, cam: CameraIntrinsics, pose: Pose) -> ProjectedGaussians:
    """
    Project every primitive in front of the near plane.

    Args:
        gaussians: Primitives to project
        cam: Pinhole intrinsics
        pose: World-to-camera transform

    Returns:
        ProjectedGaussians with ``cov2d = J W Sigma W^T J^T + 0.3 I``
    """
    cam_points = pose.world_to_camera(gaussians.positions)
    keep = np.flatnonzero(cam_points[:, 2] > NEAR_PLANE)

    pc = cam_points[keep]
    X, Y, Z = pc[:, 0], pc[:, 1], pc[:, 2]
    quat_norm = np.linalg.norm(gaussians.rotations[keep], axis=1)
    quat_unit = gaussians.rotations[keep] / quat_norm[:, None]
    scales = np.exp(gaussians.log_scales[keep])
    rotation = quaternion_to_rotation(quat_unit)

    M = rotation * scales[:, None, :]
    sigma = M @ np.transpose(M, (0, 2, 1))
    W = pose.rotation
    cov_cam = W @ sigma @ W.T

    J = np.zeros((len(keep), 2, 3))
    J[:, 0, 0] = cam.fx / Z
    J[:, 0, 2] = -cam.fx * X / (Z * Z)
    J[:, 1, 1] = cam.fy / Z
    J[:, 1, 2] = -cam.fy * Y / (Z * Z)

    cov2d = J @ cov_cam @ np.transpose(J, (0, 2, 1))
    cov2d[:, 0, 0] += COV2D_DILATION
    cov2d[:, 1, 1] += COV2D_DILATION

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    conic = np.empty_like(cov2d)
    conic[:, 0, 0] = c / det
    conic[:, 0, 1] = -b / det
    conic[:, 1, 0] = -b / det
    conic[:, 1, 1] = a / det

    mean2d = np.column_stack([cam.fx * X / Z + cam.cx, cam.fy * Y / Z + cam.cy])

    return ProjectedGaussians(
        index=keep,
        mean2d=mean2d,
        cov2d=cov2d,
        conic=conic,
        depth=Z.copy(),
        colors=gaussians.colors[keep],
        opacities=gaussians.opacities[keep],
        cam_points=pc,
        jacobian=J,
        cov_cam=cov_cam,
        rotation=rotation,
        scales=scales,
        quat_unit=quat_unit,
        quat_norm=quat_norm,
    )
