"""
BlockSplat Metrics

PSNR/SSIM evaluation of rendered views and the airspace opacity probe.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import orjson

from ..exceptions import DimensionMismatch
from ..gaussians.model import GaussianSet
from ..losses.ssim import ssim_metric
from ..render.projection import quaternion_to_rotation
from ..render.rasterizer import render
from ..sfm.types import CameraIntrinsics, ViewRecord
from ..utils import Timer, get_logger

logger = get_logger(__name__)

PSNR_CAP = 100.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """``10 log10(1 / MSE)`` for images in [0, 1], capped at 100 dB."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(a.shape, b.shape, what="image pair")
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(1.0 / mse)))


@dataclass
class EvalItem:
    view: ViewRecord
    cam: CameraIntrinsics
    image: np.ndarray
    name: str = ""


@dataclass
class EvalReport:
    """Per-view PSNR/SSIM with their means; render time is kept apart."""

    views: List[Dict[str, Any]] = field(default_factory=list)
    render_time: float = 0.0

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([v["psnr"] for v in self.views])) if self.views else 0.0

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([v["ssim"] for v in self.views])) if self.views else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "views": self.views,
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "n_views": len(self.views),
        }

    def write(self, path: Union[str, Path], timing_path: Optional[Union[str, Path]] = None):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(orjson.dumps(self.to_dict(), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))
        if timing_path is not None:
            timing = {"render_time": self.render_time, "n_views": len(self.views)}
            Path(timing_path).write_bytes(orjson.dumps(timing, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))


def evaluate_views(
    gaussians: GaussianSet,
    items: Sequence[EvalItem],
    background=None,
) -> EvalReport:
    """Render every item's view and score it against its image."""
    report = EvalReport()
    timer = Timer()
    for item in items:
        with timer:
            view = render(gaussians, item.cam, item.view.pose, background, keep_trace=False)
        report.render_time += timer.elapsed()
        report.views.append({
            "view_id": int(item.view.view_id),
            "name": item.name or item.view.image_path,
            "psnr": psnr(view.color, item.image),
            "ssim": ssim_metric(view.color, item.image),
        })
    logger.info(
        f"Evaluated {len(report.views)} views: PSNR {report.mean_psnr:.2f} dB, SSIM {report.mean_ssim:.4f}"
    )
    return report


def airspace_opacity(
    gaussians: GaussianSet,
    origins: np.ndarray,
    directions: np.ndarray,
    t_near: float,
    t_far: float,
    samples: int = 64,
) -> float:
    """
    Opacity mass along probe rays.

    Integrates ``sum_i o_i * exp(-0.5 d^T Sigma_i^-1 d)`` over each ray
    segment with the midpoint rule and sums over rays. Rays placed in empty
    space measure floaters.
    """
    if len(gaussians) == 0:
        return 0.0
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)

    step = (t_far - t_near) / samples
    ts = t_near + (np.arange(samples) + 0.5) * step
    points = (origins[:, None, :] + ts[None, :, None] * directions[:, None, :]).reshape(-1, 3)

    R = quaternion_to_rotation(gaussians.unit_rotations)
    inv_scale = np.exp(-gaussians.log_scales)
    d = points[:, None, :] - gaussians.positions[None, :, :]
    local = np.einsum("nji,pnj->pni", R, d) * inv_scale[None, :, :]
    density = gaussians.opacities[None, :] * np.exp(-0.5 * (local * local).sum(axis=-1))
    return float(density.sum() * step)
