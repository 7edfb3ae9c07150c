"""
BlockSplat Pseudo-View Constraint

A pseudo camera is made by translating a training camera along its x
axis by a disparity-sized offset. The pseudo-view rendering is warped
back into the training view through its rendered depth and compared with
the training image.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..config import LossConfig
from ..exceptions import DimensionMismatch, EmptyDepth
from ..sfm.types import CameraIntrinsics, Pose
from .photometric import EMPTY_MASK, LossResult


@dataclass(frozen=True)
class PseudoViewSetup:
    """Reference and pseudo cameras; they share intrinsics and rotation."""

    cam: CameraIntrinsics
    ref_pose: Pose
    pseudo_pose: Pose
    delta_t: np.ndarray
    median_depth: float


@dataclass
class WarpResult:
    """
    Pseudo-view colors scattered into the reference frame.

    ``correspondence`` holds, per reference pixel, the flat index of the
    pseudo pixel written there, or -1. ``coords`` holds the continuous
    reference coordinates of every pseudo pixel (nan where dropped).
    """

    warped_image: np.ndarray
    valid_mask: np.ndarray
    correspondence: np.ndarray
    coords: np.ndarray


def make_pseudo_view(
    cam: CameraIntrinsics,
    ref_pose: Pose,
    rendered_depth: np.ndarray,
    cfg: Optional[LossConfig] = None,
) -> PseudoViewSetup:
    """
    Build the pseudo camera for a reference view.

    ``delta_t = [median_depth * disparity / fx, 0, 0]`` where the median
    runs over positive rendered depths, and the pseudo translation is
    ``t_ref + delta_t``.

    Raises:
        EmptyDepth: If no rendered depth is positive
    """
    cfg = cfg or LossConfig()
    depth = np.asarray(rendered_depth, dtype=np.float64)
    positive = depth[np.isfinite(depth) & (depth > 0)]
    if positive.size == 0:
        raise EmptyDepth()

    median_depth = float(np.median(positive))
    delta_t = np.array([median_depth * cfg.pseudo_disparity / cam.fx, 0.0, 0.0])
    pseudo_pose = Pose(rotation=ref_pose.rotation, translation=ref_pose.translation + delta_t)
    return PseudoViewSetup(cam=cam, ref_pose=ref_pose, pseudo_pose=pseudo_pose, delta_t=delta_t, median_depth=median_depth)


def warp_pseudo_to_ref(
    pse_color: np.ndarray,
    pse_depth: np.ndarray,
    setup: PseudoViewSetup,
    pse_alpha: Optional[np.ndarray] = None,
    alpha_threshold: float = 0.0,
) -> WarpResult:
    """
    Forward-warp a pseudo-view rendering into the reference view.

    Each pseudo pixel with positive depth is lifted to the pseudo camera,
    moved to the reference camera (same rotation, so only ``-delta_t``)
    and projected. It lands on the nearest reference pixel; collisions
    keep the smallest reference depth, then the smallest source index.
    Pixels outside the image or with non-positive reference depth are
    dropped. When ``pse_alpha`` is given, pixels below ``alpha_threshold``
    are not warped either.
    """
    cam = setup.cam
    height, width = cam.height, cam.width
    if pse_color.shape != (height, width, 3):
        raise DimensionMismatch((height, width, 3), pse_color.shape, what="pseudo color")
    if pse_depth.shape != (height, width):
        raise DimensionMismatch((height, width), pse_depth.shape, what="pseudo depth")

    with np.errstate(invalid="ignore"):
        source = np.isfinite(pse_depth) & (pse_depth > 0)
        if pse_alpha is not None:
            source &= pse_alpha >= alpha_threshold

    vs, us = np.nonzero(source)
    z = pse_depth[vs, us]
    points = np.column_stack([
        (us - cam.cx) / cam.fx * z,
        (vs - cam.cy) / cam.fy * z,
        z,
    ])
    ref_points = points - setup.delta_t
    z_ref = ref_points[:, 2]

    coords = np.full((height, width, 2), np.nan)
    warped = np.zeros((height, width, 3))
    correspondence = np.full((height, width), -1, dtype=np.int64)

    front = z_ref > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u_ref = cam.fx * ref_points[:, 0] / z_ref + cam.cx
        v_ref = cam.fy * ref_points[:, 1] / z_ref + cam.cy
    coords[vs[front], us[front], 0] = u_ref[front]
    coords[vs[front], us[front], 1] = v_ref[front]

    col = np.floor(u_ref + 0.5)
    row = np.floor(v_ref + 0.5)
    keep = front & (col >= 0) & (col < width) & (row >= 0) & (row < height)
    if not keep.any():
        return WarpResult(warped, np.zeros((height, width), dtype=bool), correspondence, coords)

    src = (vs * width + us)[keep]
    target = (row[keep] * width + col[keep]).astype(np.int64)
    depth_ref = z_ref[keep]

    order = np.lexsort((src, depth_ref, target))
    target, src = target[order], src[order]
    first = np.ones(len(target), dtype=bool)
    first[1:] = target[1:] != target[:-1]
    target, src = target[first], src[first]

    flat_corr = correspondence.reshape(-1)
    flat_corr[target] = src
    warped.reshape(-1, 3)[target] = pse_color.reshape(-1, 3)[src]
    mask = correspondence >= 0
    return WarpResult(warped, mask, correspondence, coords)


def pseudo_view_loss(gt_ref: np.ndarray, warp: WarpResult) -> LossResult:
    """
    Masked L1 between the reference image and the warped pseudo view.

    The gradient is with respect to the pseudo-view color and is routed
    through the stored correspondence; the warp geometry is held fixed.

    Returns:
        LossResult; flagged EmptyMask when nothing was warped
    """
    gt_ref = np.asarray(gt_ref, dtype=np.float64)
    if gt_ref.shape != warp.warped_image.shape:
        raise DimensionMismatch(warp.warped_image.shape, gt_ref.shape, what="reference image")

    mask = warp.valid_mask
    if not mask.any():
        return LossResult.flagged(gt_ref.shape, EMPTY_MASK)

    diff = warp.warped_image[mask] - gt_ref[mask]
    value = float(np.abs(diff).mean())

    grad = np.zeros_like(gt_ref)
    grad.reshape(-1, 3)[warp.correspondence[mask]] = np.sign(diff) / diff.size
    return LossResult(value, grad)
