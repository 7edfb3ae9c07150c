"""
BlockSplat Synthetic Scenes

Seeded desk-scale scenes: Gaussians in a 2 x 1 x 2 box (the x < 0 half
three times denser), a ring of inward-looking cameras, ground-truth
renders and a sparse model derived from the Gaussian centres.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import orjson

from ..gaussians.model import GaussianSet, logit
from ..render.oracle import render_oracle
from ..sfm.colmap import write_sparse_model
from ..sfm.images import save_image, write_pfm
from ..sfm.types import CameraIntrinsics, Pose, SparseModel, SparsePoint, ViewRecord
from ..utils import get_logger

logger = get_logger(__name__)

BOX_LOW = (-1.0, 0.0, -1.0)
BOX_HIGH = (1.0, 1.0, 1.0)
DENSE_FRACTION = 0.75
RING_RADIUS = 3.2
RING_HEIGHT = 1.2
LOOK_AT = (0.0, 0.5, 0.0)
FOCAL_FACTOR = 0.9
PRIOR_ALPHA = 0.5
ROI_MARGIN = 0.05
AIR_RADIUS = 2.3
AIR_HEIGHT = 0.8
AIR_HALF_LENGTH = 0.6


def look_at(center: np.ndarray, target: np.ndarray, up=(0.0, 1.0, 0.0)) -> Pose:
    """World-to-camera pose with x right, y down and z towards ``target``."""
    center = np.asarray(center, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - center
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return Pose(rotation=rotation, translation=-rotation @ center)


def _sample_gaussians(n: int, rng: np.random.Generator) -> GaussianSet:
    n_dense = int(round(DENSE_FRACTION * n))
    low = np.array(BOX_LOW)
    high = np.array(BOX_HIGH)
    dense = rng.uniform(low, [0.0, high[1], high[2]], size=(n_dense, 3))
    sparse = rng.uniform([0.0, low[1], low[2]], high, size=(n - n_dense, 3))
    positions = np.concatenate([dense, sparse])

    rotations = rng.normal(size=(n, 4))
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    log_scales = np.log(rng.uniform(0.06, 0.14, size=(n, 3)))
    opacity_logits = logit(rng.uniform(0.6, 0.95, size=n))
    colors = rng.uniform(0.1, 0.9, size=(n, 3))
    return GaussianSet(positions, rotations, log_scales, opacity_logits, colors)


def _visible_points(positions: np.ndarray, cam: CameraIntrinsics, pose: Pose) -> np.ndarray:
    """Indices of centres inside the frustum that are nearest on their pixel."""
    pc = pose.world_to_camera(positions)
    z = pc[:, 2]
    front = z > 0.01
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.floor(cam.fx * pc[:, 0] / z + cam.cx + 0.5)
        v = np.floor(cam.fy * pc[:, 1] / z + cam.cy + 0.5)
    inside = front & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    idx = np.flatnonzero(inside)
    if len(idx) == 0:
        return idx
    pixel = (v[idx] * cam.width + u[idx]).astype(np.int64)
    order = np.lexsort((idx, z[idx], pixel))
    pixel, idx = pixel[order], idx[order]
    first = np.ones(len(idx), dtype=bool)
    first[1:] = pixel[1:] != pixel[:-1]
    return np.sort(idx[first])


@dataclass
class SyntheticScene:
    """Ground truth of a generated scene; everything is a function of the seed."""

    gaussians: GaussianSet
    cam: CameraIntrinsics
    views: List[ViewRecord]
    images: List[np.ndarray]
    depths: List[np.ndarray]
    alphas: List[np.ndarray]
    seed: int
    names: List[str] = field(default_factory=list)

    @property
    def n_views(self) -> int:
        return len(self.views)

    def depth_prior(self, index: int) -> np.ndarray:
        """Alpha-normalized depth, nan where ground-truth alpha < 0.5."""
        alpha = self.alphas[index]
        prior = np.full(alpha.shape, np.nan)
        ok = alpha >= PRIOR_ALPHA
        prior[ok] = self.depths[index][ok] / alpha[ok]
        return prior

    def eval_every(self) -> int:
        """Hold out four views of larger rings, none of rings under 8 views."""
        return self.n_views // 4 if self.n_views >= 8 else 0

    def roi(self) -> Tuple[float, float, float, float]:
        return (
            BOX_LOW[0] - ROI_MARGIN,
            BOX_HIGH[0] + ROI_MARGIN,
            BOX_LOW[2] - ROI_MARGIN,
            BOX_HIGH[2] + ROI_MARGIN,
        )

    def probe_rays(self, n: int = 8) -> Tuple[np.ndarray, np.ndarray, float, float]:
        """
        Short tangential rays in the empty ring between cameras and content.

        Returns:
            Tuple of (origins, directions, t_near, t_far)
        """
        angles = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        origins = np.column_stack([AIR_RADIUS * np.cos(angles), np.full(n, AIR_HEIGHT), AIR_RADIUS * np.sin(angles)])
        directions = np.column_stack([-np.sin(angles), np.zeros(n), np.cos(angles)])
        return origins, directions, -AIR_HALF_LENGTH, AIR_HALF_LENGTH

    def config_dict(self, iterations: int = 2000) -> Dict:
        n = len(self.gaussians)
        return {
            "sfm_dir": "sparse/0",
            "image_dir": "images",
            "depth_dir": "depths",
            "output_dir": "output",
            "sparse_format": "binary",
            "eval_every": self.eval_every(),
            "seed": self.seed,
            "partition": {
                "roi": list(self.roi()),
                "up_axis": "+y",
                "block_point_threshold": max(1, n // 3),
            },
            "train": {
                "iterations": iterations,
                "log_interval": 200,
            },
        }

    def write(self, out_dir: Union[str, Path], model: SparseModel, iterations: int = 2000) -> Path:
        """
        Write images, depth priors, a binary sparse model and ``blocksplat.json``.

        Returns:
            Path of the written config file
        """
        out_dir = Path(out_dir)
        for i, view in enumerate(self.views):
            save_image(out_dir / "images" / view.image_path, self.images[i])
            write_pfm(out_dir / "depths" / (Path(view.image_path).stem + ".pfm"), self.depth_prior(i))
        write_sparse_model(model, out_dir / "sparse" / "0", format="binary")
        config_path = out_dir / "blocksplat.json"
        config_path.write_bytes(orjson.dumps(self.config_dict(iterations), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))
        logger.info(f"Wrote synthetic scene with {self.n_views} views to {out_dir}")
        return config_path


def generate_synthetic_scene(
    n_gaussians: int = 150,
    n_views: int = 24,
    resolution: int = 64,
    seed: int = 0,
) -> Tuple[SyntheticScene, SparseModel]:
    """
    Generate a scene and its sparse model.

    Args:
        n_gaussians: Number of ground-truth Gaussians (at least 1)
        n_views: Cameras on the ring
        resolution: Square image size in pixels
        seed: Seed of every random draw

    Returns:
        Tuple of (scene, sparse model); point ids are Gaussian index + 1 and
        only centres seen by at least one view become points
    """
    if n_gaussians < 1:
        raise ValueError("n_gaussians must be at least 1")
    if n_views < 1:
        raise ValueError("n_views must be at least 1")

    rng = np.random.default_rng(seed)
    gaussians = _sample_gaussians(n_gaussians, rng)
    focal = FOCAL_FACTOR * resolution
    cam = CameraIntrinsics(
        width=resolution,
        height=resolution,
        fx=focal,
        fy=focal,
        cx=resolution / 2.0,
        cy=resolution / 2.0,
        camera_id=1,
        model="PINHOLE",
    )

    poses = []
    observers: Dict[int, set] = {}
    visible_by_view = []
    for k in range(n_views):
        angle = 2.0 * np.pi * k / n_views
        center = np.array([RING_RADIUS * np.cos(angle), RING_HEIGHT, RING_RADIUS * np.sin(angle)])
        pose = look_at(center, LOOK_AT)
        poses.append(pose)
        visible = _visible_points(gaussians.positions, cam, pose)
        visible_by_view.append(visible)
        for i in visible.tolist():
            observers.setdefault(i, set()).add(k + 1)

    views = []
    images, depths, alphas, names = [], [], [], []
    for k, pose in enumerate(poses):
        name = f"view_{k:03d}.png"
        views.append(ViewRecord(
            view_id=k + 1,
            intrinsics_id=cam.camera_id,
            rotation=pose.rotation,
            translation=pose.translation,
            image_path=name,
            visible_point_ids=frozenset(int(i) + 1 for i in visible_by_view[k]),
        ))
        rendered = render_oracle(gaussians, cam, pose)
        images.append(rendered.color)
        depths.append(rendered.depth)
        alphas.append(rendered.accum_alpha)
        names.append(name)

    points = {
        i + 1: SparsePoint(
            point_id=i + 1,
            position=gaussians.positions[i],
            color=gaussians.colors[i],
            observing_view_ids=frozenset(observers[i]),
        )
        for i in sorted(observers)
    }
    model = SparseModel(cameras={cam.camera_id: cam}, views={v.view_id: v for v in views}, points=points)
    scene = SyntheticScene(
        gaussians=gaussians,
        cam=cam,
        views=views,
        images=images,
        depths=depths,
        alphas=alphas,
        seed=seed,
        names=names,
    )
    logger.info(f"Generated synthetic scene: {n_gaussians} Gaussians, {n_views} views, {len(points)} sparse points")
    return scene, model
