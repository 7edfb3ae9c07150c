"""
BlockSplat Reference Renderer

Slow per-pixel compositing used to check the rasterizer. No footprint
culling: every pixel visits every projected primitive in sorted order.
"""

import math
from typing import Sequence, Union

import numpy as np

from ..gaussians.model import GaussianSet, concat, sigmoid
from ..sfm.types import CameraIntrinsics, Pose
from .projection import COV2D_DILATION, NEAR_PLANE, quaternion_to_rotation
from .rasterizer import ALPHA_MAX, ALPHA_MIN, TRANSMITTANCE_MIN, RenderedView


def _project_one(position, quat, log_scale, cam: CameraIntrinsics, pose: Pose):
    pc = pose.rotation @ position + pose.translation
    X, Y, Z = pc
    if Z <= NEAR_PLANE:
        return None
    q = quat / np.linalg.norm(quat)
    R = quaternion_to_rotation(q[None, :])[0]
    M = R * np.exp(log_scale)[None, :]
    sigma = pose.rotation @ (M @ M.T) @ pose.rotation.T
    J = np.array([
        [cam.fx / Z, 0.0, -cam.fx * X / (Z * Z)],
        [0.0, cam.fy / Z, -cam.fy * Y / (Z * Z)],
    ])
    cov = J @ sigma @ J.T
    a = cov[0, 0] + COV2D_DILATION
    b = cov[0, 1]
    c = cov[1, 1] + COV2D_DILATION
    det = a * c - b * b
    conic = (c / det, -b / det, a / det)
    mean = (cam.fx * X / Z + cam.cx, cam.fy * Y / Z + cam.cy)
    return mean, conic, Z


def render_oracle(
    sets: Union[GaussianSet, Sequence[GaussianSet]],
    cam: CameraIntrinsics,
    pose: Pose,
    background=None,
) -> RenderedView:
    """Same contract as ``render``; returns a view without a trace."""
    sets = [sets] if isinstance(sets, GaussianSet) else list(sets)
    union = concat(sets)
    bg = np.zeros(3) if background is None else np.asarray(background, dtype=np.float64).reshape(3)

    entries = []
    opacities = sigmoid(union.opacity_logits)
    for i in range(len(union)):
        projected = _project_one(union.positions[i], union.rotations[i], union.log_scales[i], cam, pose)
        if projected is None:
            continue
        mean, conic, z = projected
        entries.append((float(z), i, mean, conic, float(opacities[i]), tuple(float(x) for x in union.colors[i])))
    entries.sort(key=lambda e: (e[0], e[1]))

    color = np.zeros((cam.height, cam.width, 3))
    depth = np.zeros((cam.height, cam.width))
    accum = np.zeros((cam.height, cam.width))

    for v in range(cam.height):
        for u in range(cam.width):
            T = 1.0
            r = g = b = 0.0
            d = 0.0
            for z, _, mean, conic, opacity, rgb in entries:
                if opacity < ALPHA_MIN:
                    continue
                dx = u - mean[0]
                dy = v - mean[1]
                power = -0.5 * (conic[0] * dx * dx + 2.0 * conic[1] * dx * dy + conic[2] * dy * dy)
                alpha = min(ALPHA_MAX, opacity * math.exp(power))
                if alpha < ALPHA_MIN:
                    continue
                test_t = T * (1.0 - alpha)
                if test_t < TRANSMITTANCE_MIN:
                    break
                w = alpha * T
                r += w * rgb[0]
                g += w * rgb[1]
                b += w * rgb[2]
                d += w * z
                T = test_t
            color[v, u] = (r + T * bg[0], g + T * bg[1], b + T * bg[2])
            depth[v, u] = d
            accum[v, u] = 1.0 - T

    return RenderedView(color=color, depth=depth, accum_alpha=accum, trace=None)
