"""
BlockSplat Rasterizer

Deterministic CPU rasterization of Gaussian sets into color, depth and
accumulated-alpha buffers, plus the analytic backward pass.

Primitives are sorted once per view by camera depth (ties broken by
their position in the rendered union) and composited front to back, each
on the pixel rectangle where its alpha can reach the skip threshold.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from ..exceptions import DimensionMismatch, MissingForwardState
from ..gaussians.model import GaussianSet, concat
from ..sfm.types import CameraIntrinsics, Pose
from ..utils import get_logger
from .projection import ProjectedGaussians, project

logger = get_logger(__name__)

ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
TRANSMITTANCE_MIN = 1e-4


@dataclass
class _Splat:
    """Forward record of one primitive on its footprint."""

    __slots__ = ("row", "y0", "y1", "x0", "x1", "alpha", "gauss", "t_before", "contrib", "unclamped")

    row: int
    y0: int
    y1: int
    x0: int
    x1: int
    alpha: np.ndarray
    gauss: np.ndarray
    t_before: np.ndarray
    contrib: np.ndarray
    unclamped: np.ndarray


@dataclass
class RenderTrace:
    """Everything the backward pass needs from one forward call."""

    projected: ProjectedGaussians
    splats: List[_Splat]
    set_sizes: List[int]
    background: np.ndarray
    transmittance: np.ndarray
    cam: CameraIntrinsics
    pose: Pose


@dataclass
class RenderedView:
    """Per-pixel color (H, W, 3), expected depth (H, W) and accumulated alpha (H, W)."""

    color: np.ndarray
    depth: np.ndarray
    accum_alpha: np.ndarray
    trace: Optional[RenderTrace] = None


@dataclass
class GradientSet:
    """
    Gradients of a scalar loss for one GaussianSet.

    ``screen_grad_norm`` is the norm of the gradient with respect to the
    projected center in normalized device units; ``visible`` marks
    primitives that contributed to at least one pixel.
    """

    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray
    screen_grad_norm: np.ndarray = field(default=None)
    visible: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.positions)
        if self.screen_grad_norm is None:
            self.screen_grad_norm = np.zeros(n)
        if self.visible is None:
            self.visible = np.zeros(n, dtype=bool)

    @classmethod
    def zeros(cls, n: int) -> "GradientSet":
        return cls(np.zeros((n, 3)), np.zeros((n, 4)), np.zeros((n, 3)), np.zeros(n), np.zeros((n, 3)))

    def params(self):
        return [self.positions, self.rotations, self.log_scales, self.opacity_logits, self.colors]

    def __len__(self) -> int:
        return len(self.positions)

    def add_scaled(self, other: "GradientSet", factor: float = 1.0):
        """Accumulate ``factor * other`` into the parameter gradients in place."""
        for mine, theirs in zip(self.params(), other.params()):
            mine += factor * theirs

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def _as_sets(sets: Union[GaussianSet, Sequence[GaussianSet]]) -> List[GaussianSet]:
    if isinstance(sets, GaussianSet):
        return [sets]
    return list(sets)


def _footprint(mean: np.ndarray, cov: np.ndarray, opacity: float, width: int, height: int):
    """
    Pixel rectangle (y0, y1, x0, x1) outside of which ``opacity * G < 1/255``.

    Returns None when the rectangle misses the image.
    """
    m_max = 2.0 * np.log(255.0 * opacity)
    rx = np.sqrt(m_max * cov[0, 0])
    ry = np.sqrt(m_max * cov[1, 1])
    if not (np.isfinite(rx) and np.isfinite(ry) and np.all(np.isfinite(mean))):
        return None
    x0 = max(0, int(np.floor(mean[0] - rx)) - 1)
    x1 = min(width, int(np.ceil(mean[0] + rx)) + 2)
    y0 = max(0, int(np.floor(mean[1] - ry)) - 1)
    y1 = min(height, int(np.ceil(mean[1] + ry)) + 2)
    if x0 >= x1 or y0 >= y1:
        return None
    return y0, y1, x0, x1


def _offsets(proj: ProjectedGaussians, row: int, y0: int, y1: int, x0: int, x1: int):
    dx = np.arange(x0, x1, dtype=np.float64)[None, :] - proj.mean2d[row, 0]
    dy = np.arange(y0, y1, dtype=np.float64)[:, None] - proj.mean2d[row, 1]
    return dx, dy


def render(
    sets: Union[GaussianSet, Sequence[GaussianSet]],
    cam: CameraIntrinsics,
    pose: Pose,
    background=None,
    keep_trace: bool = True,
) -> RenderedView:
    """
    Rasterize the union of one or more Gaussian sets.

    Args:
        sets: A GaussianSet or a sequence of them (block set first, then auxiliary)
        cam: Pinhole intrinsics; image size comes from here
        pose: World-to-camera transform
        background: RGB background, black by default
        keep_trace: Keep the per-primitive forward state for ``render_backward``

    Returns:
        RenderedView with color, unnormalized expected depth and accumulated alpha
    """
    sets = _as_sets(sets)
    union = concat(sets)
    bg = np.zeros(3) if background is None else np.asarray(background, dtype=np.float64).reshape(3)
    height, width = cam.height, cam.width

    proj = project(union, cam, pose)
    order = np.lexsort((proj.index, proj.depth))

    T = np.ones((height, width))
    color = np.zeros((height, width, 3))
    depth = np.zeros((height, width))
    done = np.zeros((height, width), dtype=bool)
    splats: List[_Splat] = []

    for row in order.tolist():
        opacity = proj.opacities[row]
        if opacity < ALPHA_MIN:
            continue
        box = _footprint(proj.mean2d[row], proj.cov2d[row], opacity, width, height)
        if box is None:
            continue
        y0, y1, x0, x1 = box

        dx, dy = _offsets(proj, row, y0, y1, x0, x1)
        q = proj.conic[row]
        power = -0.5 * (q[0, 0] * dx * dx + 2.0 * q[0, 1] * dx * dy + q[1, 1] * dy * dy)
        gauss = np.exp(power)
        raw = opacity * gauss
        alpha = np.minimum(ALPHA_MAX, raw)

        active = (alpha >= ALPHA_MIN) & ~done[y0:y1, x0:x1]
        if not active.any():
            continue
        t_before = T[y0:y1, x0:x1].copy()
        test_t = t_before * (1.0 - alpha)
        stop = active & (test_t < TRANSMITTANCE_MIN)
        contrib = active & ~stop
        done[y0:y1, x0:x1] |= stop
        if not contrib.any():
            continue

        weight = np.where(contrib, alpha * t_before, 0.0)
        color[y0:y1, x0:x1] += weight[..., None] * proj.colors[row]
        depth[y0:y1, x0:x1] += weight * proj.depth[row]
        T[y0:y1, x0:x1] = np.where(contrib, test_t, t_before)

        if keep_trace:
            splats.append(_Splat(row, y0, y1, x0, x1, alpha, gauss, t_before, contrib, raw < ALPHA_MAX))

    color += T[..., None] * bg
    trace = None
    if keep_trace:
        trace = RenderTrace(
            projected=proj,
            splats=splats,
            set_sizes=[len(s) for s in sets],
            background=bg,
            transmittance=T,
            cam=cam,
            pose=pose,
        )
    return RenderedView(color=color, depth=depth, accum_alpha=1.0 - T, trace=trace)


def _rotation_grad_to_quat(q: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Chain d/dR of ``R(q)`` for unit quaternions (w, x, y, z)."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    G = g
    gw = 2 * (-z * G[:, 0, 1] + y * G[:, 0, 2] + z * G[:, 1, 0] - x * G[:, 1, 2] - y * G[:, 2, 0] + x * G[:, 2, 1])
    gx = 2 * (y * G[:, 0, 1] + z * G[:, 0, 2] + y * G[:, 1, 0] - 2 * x * G[:, 1, 1]
              - w * G[:, 1, 2] + z * G[:, 2, 0] + w * G[:, 2, 1] - 2 * x * G[:, 2, 2])
    gy = 2 * (-2 * y * G[:, 0, 0] + x * G[:, 0, 1] + w * G[:, 0, 2] + x * G[:, 1, 0]
              + z * G[:, 1, 2] - w * G[:, 2, 0] + z * G[:, 2, 1] - 2 * y * G[:, 2, 2])
    gz = 2 * (-2 * z * G[:, 0, 0] - w * G[:, 0, 1] + x * G[:, 0, 2] + w * G[:, 1, 0]
              - 2 * z * G[:, 1, 1] + y * G[:, 1, 2] + x * G[:, 2, 0] + y * G[:, 2, 1])
    return np.stack([gw, gx, gy, gz], axis=1)


def render_backward(
    view: RenderedView,
    d_color: np.ndarray,
    d_depth: Optional[np.ndarray] = None,
) -> List[GradientSet]:
    """
    Gradients of ``sum(d_color * color) + sum(d_depth * depth)``.

    Args:
        view: Result of ``render(..., keep_trace=True)``
        d_color: (H, W, 3) upstream gradient of the color buffer
        d_depth: Optional (H, W) upstream gradient of the depth buffer

    Returns:
        One GradientSet per set passed to ``render``, in the same order
    """
    trace = view.trace
    if trace is None:
        raise MissingForwardState()

    height, width = view.depth.shape
    d_color = np.asarray(d_color, dtype=np.float64)
    if d_color.shape != (height, width, 3):
        raise DimensionMismatch((height, width, 3), d_color.shape, what="color gradient")
    if d_depth is not None:
        d_depth = np.asarray(d_depth, dtype=np.float64)
        if d_depth.shape != (height, width):
            raise DimensionMismatch((height, width), d_depth.shape, what="depth gradient")

    proj = trace.projected
    m = len(proj)
    g_color = np.zeros((m, 3))
    g_depth = np.zeros(m)
    g_opacity = np.zeros(m)
    g_mean = np.zeros((m, 2))
    g_conic = np.zeros((m, 2, 2))
    visible = np.zeros(m, dtype=bool)

    # Contributions behind the current primitive, background included.
    behind_c = trace.transmittance[..., None] * trace.background
    behind_d = np.zeros((height, width))

    for sp in reversed(trace.splats):
        r = sp.row
        ys = slice(sp.y0, sp.y1)
        xs = slice(sp.x0, sp.x1)
        dC = d_color[ys, xs]
        c = proj.colors[r]
        z = proj.depth[r]

        weight = np.where(sp.contrib, sp.alpha * sp.t_before, 0.0)
        one_minus = 1.0 - sp.alpha

        g_color[r] += (weight[..., None] * dC).sum(axis=(0, 1))
        g_alpha = ((sp.t_before[..., None] * c - behind_c[ys, xs] / one_minus[..., None]) * dC).sum(axis=-1)
        if d_depth is not None:
            dD = d_depth[ys, xs]
            g_depth[r] += (weight * dD).sum()
            g_alpha += dD * (sp.t_before * z - behind_d[ys, xs] / one_minus)
        g_alpha = np.where(sp.contrib & sp.unclamped, g_alpha, 0.0)

        behind_c[ys, xs] += weight[..., None] * c
        behind_d[ys, xs] += weight * z

        g_opacity[r] += (g_alpha * sp.gauss).sum()
        g_power = g_alpha * proj.opacities[r] * sp.gauss
        dx, dy = _offsets(proj, r, sp.y0, sp.y1, sp.x0, sp.x1)
        q = proj.conic[r]
        g_mean[r, 0] += (g_power * (q[0, 0] * dx + q[0, 1] * dy)).sum()
        g_mean[r, 1] += (g_power * (q[0, 1] * dx + q[1, 1] * dy)).sum()
        g_conic[r, 0, 0] += -0.5 * (g_power * dx * dx).sum()
        off = -0.5 * (g_power * dx * dy).sum()
        g_conic[r, 0, 1] += off
        g_conic[r, 1, 0] += off
        g_conic[r, 1, 1] += -0.5 * (g_power * dy * dy).sum()
        visible[r] |= bool(sp.contrib.any())

    cam = trace.cam
    W = trace.pose.rotation
    Q = proj.conic
    J = proj.jacobian
    Jt = np.transpose(J, (0, 2, 1))

    g_cov2d = -Q @ g_conic @ Q
    g_cov_cam = Jt @ g_cov2d @ J
    g_J = (g_cov2d + np.transpose(g_cov2d, (0, 2, 1))) @ J @ proj.cov_cam
    g_sigma = W.T @ g_cov_cam @ W

    M = proj.rotation * proj.scales[:, None, :]
    g_M = (g_sigma + np.transpose(g_sigma, (0, 2, 1))) @ M
    g_scales = (g_M * proj.rotation).sum(axis=1)
    g_log_scales = g_scales * proj.scales
    g_R = g_M * proj.scales[:, None, :]
    g_qhat = _rotation_grad_to_quat(proj.quat_unit, g_R)
    qhat = proj.quat_unit
    g_quat = (g_qhat - qhat * (qhat * g_qhat).sum(axis=1, keepdims=True)) / proj.quat_norm[:, None]

    X, Y, Z = proj.cam_points[:, 0], proj.cam_points[:, 1], proj.cam_points[:, 2]
    fx, fy = cam.fx, cam.fy
    gu, gv = g_mean[:, 0], g_mean[:, 1]
    Z2 = Z * Z
    Z3 = Z2 * Z
    g_pc = np.empty((m, 3))
    g_pc[:, 0] = gu * fx / Z - g_J[:, 0, 2] * fx / Z2
    g_pc[:, 1] = gv * fy / Z - g_J[:, 1, 2] * fy / Z2
    g_pc[:, 2] = (
        -(gu * fx * X + gv * fy * Y) / Z2
        - g_J[:, 0, 0] * fx / Z2
        + g_J[:, 0, 2] * 2.0 * fx * X / Z3
        - g_J[:, 1, 1] * fy / Z2
        + g_J[:, 1, 2] * 2.0 * fy * Y / Z3
        + g_depth
    )
    g_world = g_pc @ W

    o = proj.opacities
    g_logit = g_opacity * o * (1.0 - o)
    screen_norm = np.hypot(gu * 0.5 * cam.width, gv * 0.5 * cam.height)

    n_total = sum(trace.set_sizes)
    union = GradientSet.zeros(n_total)
    idx = proj.index
    union.positions[idx] = g_world
    union.rotations[idx] = g_quat
    union.log_scales[idx] = g_log_scales
    union.opacity_logits[idx] = g_logit
    union.colors[idx] = g_color
    union.screen_grad_norm[idx] = screen_norm
    union.visible[idx] = visible

    grads = []
    start = 0
    for size in trace.set_sizes:
        sl = slice(start, start + size)
        grads.append(GradientSet(
            positions=union.positions[sl],
            rotations=union.rotations[sl],
            log_scales=union.log_scales[sl],
            opacity_logits=union.opacity_logits[sl],
            colors=union.colors[sl],
            screen_grad_norm=union.screen_grad_norm[sl],
            visible=union.visible[sl],
        ))
        start += size
    return grads
