"""
BlockSplat Block Trainer

Mini-batch optimization of one block: render the block and auxiliary
Gaussians together for a batch of assigned views, accumulate the
gradients of the photometric, depth-prior and pseudo-view terms, then
take one Adam step per set.
"""

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import orjson

from ..config import LossConfig, TrainConfig
from ..exceptions import DivergedLoss, EmptyDepth, NoViews
from ..gaussians.model import BlockGaussianState, GaussianSet
from ..losses import depth_prior_loss, make_pseudo_view, photometric_loss, pseudo_view_loss, warp_pseudo_to_ref
from ..render.rasterizer import GradientSet, render, render_backward
from ..sfm.types import CameraIntrinsics, DepthPrior, ViewRecord
from ..utils import Timer, get_logger
from .adam import Adam
from .densify import DensifyStats, densify_and_prune, reset_opacity
from .schedule import position_lr, schedule_weights

logger = get_logger(__name__)


@dataclass
class TrainingView:
    """An assigned view with its image and optional depth prior."""

    view: ViewRecord
    cam: CameraIntrinsics
    image: np.ndarray
    prior: Optional[DepthPrior] = None

    @property
    def has_prior(self) -> bool:
        return self.prior is not None and self.prior.depth is not None


@dataclass
class TrainingRecord:
    iteration: int
    total: float
    photometric: float
    depth: float
    pseudo: float
    depth_weight: float
    pseudo_weight: float
    n_block: int
    n_aux: int
    wall_time: float


class TrainingLog:
    """Per-iteration records of one block run."""

    def __init__(self, block_id: int):
        self.block_id = block_id
        self.records: List[TrainingRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: TrainingRecord):
        self.records.append(record)

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.records])

    def trailing_mean(self, count: int, end: Optional[int] = None) -> float:
        """Mean total loss of the ``count`` records ending before ``end``."""
        totals = self.totals()[:end]
        if len(totals) == 0:
            return float("nan")
        return float(totals[-count:].mean())

    def to_jsonl(self, include_wall_time: bool = True) -> bytes:
        lines = []
        for record in self.records:
            data = asdict(record)
            if not include_wall_time:
                data.pop("wall_time")
            lines.append(orjson.dumps(data, option=orjson.OPT_SORT_KEYS))
        return b"\n".join(lines) + (b"\n" if lines else b"")

    def write(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_jsonl())

    @classmethod
    def read(cls, path: Union[str, Path], block_id: int = -1) -> "TrainingLog":
        log = cls(block_id)
        for line in Path(path).read_bytes().splitlines():
            if line.strip():
                log.append(TrainingRecord(**orjson.loads(line)))
        return log


def spatial_scale(views: Sequence[TrainingView], fallback: float) -> float:
    """1.1 times the largest camera-centre distance from their mean."""
    centers = np.array([tv.view.pose.camera_center for tv in views])
    radius = float(np.linalg.norm(centers - centers.mean(axis=0), axis=1).max()) * 1.1
    return radius if radius > 1e-6 else fallback


def _learning_rates(cfg: TrainConfig, position: float) -> Dict[str, float]:
    return {
        "positions": position,
        "rotations": cfg.rotation_lr,
        "log_scales": cfg.scale_lr,
        "opacity_logits": cfg.opacity_lr,
        "colors": cfg.color_lr,
    }


class BlockTrainer:
    """
    Optimizer for one BlockGaussianState.

    Owns the state, both Adam instances, the densification statistics and
    the random generator; nothing is shared between trainers.
    """

    def __init__(
        self,
        state: BlockGaussianState,
        views: Sequence[TrainingView],
        cfg: TrainConfig,
        loss_cfg: Optional[LossConfig] = None,
        seed: Optional[int] = None,
    ):
        if not views:
            raise NoViews(state.block_id)
        self.state = state.copy()
        if not cfg.use_auxiliary:
            self.state.auxiliary = GaussianSet.empty()
        self.views = list(views)
        self.cfg = cfg
        self.loss_cfg = loss_cfg or LossConfig()
        self.seed = cfg.rng_seed ^ state.block_id if seed is None else seed
        self.rng = np.random.default_rng(self.seed)
        self.background = np.asarray(cfg.background, dtype=np.float64)
        self.scale = spatial_scale(self.views, fallback=state.block_bounds.diagonal)

        lrs = _learning_rates(cfg, position_lr(0, cfg, self.scale))
        self.block_opt = Adam(self.state.block, lrs)
        self.aux_opt = Adam(self.state.auxiliary, lrs)
        self.stats = DensifyStats(len(self.state.block))
        self.log = TrainingLog(state.block_id)
        self.timer = Timer()

    @property
    def batch_size(self) -> int:
        return min(self.cfg.batch_size, len(self.views))

    def _sets(self):
        return [self.state.block, self.state.auxiliary]

    def _pseudo_term(self, tv: TrainingView, ref_depth: np.ndarray):
        """Pseudo-view loss and its gradients for one reference view, or None."""
        try:
            setup = make_pseudo_view(tv.cam, tv.view.pose, ref_depth, self.loss_cfg)
        except EmptyDepth:
            logger.debug(f"Block {self.state.block_id}: no rendered depth for a pseudo view")
            return None
        pse = render(self._sets(), tv.cam, setup.pseudo_pose, self.background)
        warp = warp_pseudo_to_ref(pse.color, pse.depth, setup, pse.accum_alpha, self.loss_cfg.alpha_mask_threshold)
        result = pseudo_view_loss(tv.image, warp)
        if result.flag:
            logger.debug(f"Block {self.state.block_id}: pseudo view flagged {result.flag}")
            return None
        return result, pse

    def step(self, t: int) -> TrainingRecord:
        """Run iteration ``t`` (0-based) and return its record."""
        cfg = self.cfg
        depth_weight, pseudo_weight = schedule_weights(t, cfg)
        if not cfg.use_depth_prior:
            depth_weight = 0.0
        if not cfg.use_pseudo_view:
            pseudo_weight = 0.0

        lr = position_lr(t, cfg, self.scale)
        self.block_opt.set_lr("positions", lr)
        self.aux_opt.set_lr("positions", lr)

        batch = self.rng.choice(len(self.views), size=self.batch_size, replace=False)
        inv_b = 1.0 / len(batch)
        block_grad = GradientSet.zeros(len(self.state.block))
        aux_grad = GradientSet.zeros(len(self.state.auxiliary))
        photo_sum = depth_sum = pseudo_sum = 0.0

        for k, index in enumerate(batch.tolist()):
            tv = self.views[index]
            view = render(self._sets(), tv.cam, tv.view.pose, self.background)
            photo = photometric_loss(view.color, tv.image, self.loss_cfg)
            photo_sum += photo.value

            d_depth = None
            if depth_weight > 0.0 and tv.has_prior:
                depth = depth_prior_loss(view.depth, tv.prior, view.accum_alpha, self.loss_cfg)
                if depth.flag is None:
                    depth_sum += depth.value
                    d_depth = depth_weight * depth.grad

            grads = render_backward(view, photo.grad, d_depth)
            self.stats.add(grads[0])
            block_grad.add_scaled(grads[0], inv_b)
            aux_grad.add_scaled(grads[1], inv_b)

            if k == 0 and pseudo_weight > 0.0 and t >= cfg.pseudo_start:
                pseudo = self._pseudo_term(tv, view.depth)
                if pseudo is not None:
                    result, pse = pseudo
                    pseudo_sum += result.value
                    pse_grads = render_backward(pse, pseudo_weight * result.grad)
                    block_grad.add_scaled(pse_grads[0], inv_b)
                    aux_grad.add_scaled(pse_grads[1], inv_b)

        photo_mean = photo_sum * inv_b
        depth_mean = depth_sum * inv_b
        pseudo_mean = pseudo_sum * inv_b
        total = photo_mean + depth_weight * depth_mean + pseudo_weight * pseudo_mean
        if not np.isfinite(total) or not (block_grad.is_finite() and aux_grad.is_finite()):
            raise DivergedLoss(t, snapshot=self.state.copy())

        self.block_opt.step(self.state.block, block_grad)
        self.aux_opt.step(self.state.auxiliary, aux_grad)

        done = t + 1
        if cfg.densify_start < done <= cfg.densify_stop and done % cfg.densify_interval == 0:
            self._densify()
        if cfg.opacity_reset_interval and done % cfg.opacity_reset_interval == 0:
            self._reset_opacity()

        return TrainingRecord(
            iteration=t,
            total=float(total),
            photometric=float(photo_mean),
            depth=float(depth_mean),
            pseudo=float(pseudo_mean),
            depth_weight=float(depth_weight),
            pseudo_weight=float(pseudo_weight),
            n_block=len(self.state.block),
            n_aux=len(self.state.auxiliary),
            wall_time=self.timer.elapsed(),
        )

    def _densify(self):
        result = densify_and_prune(self.state, self.stats, self.cfg, self.rng)
        self.state = result.state
        self.block_opt.remap(result.block_origin)
        self.aux_opt.remap(result.aux_origin)
        self.stats.reset(len(self.state.block))

    def _reset_opacity(self):
        for gaussians, opt in ((self.state.block, self.block_opt), (self.state.auxiliary, self.aux_opt)):
            changed = reset_opacity(gaussians)
            opt.reset("opacity_logits", changed)

    def run(self) -> Tuple[BlockGaussianState, TrainingLog]:
        """Run every iteration and return the optimized state with its log."""
        self.timer.start()
        for t in range(self.cfg.iterations):
            record = self.step(t)
            self.log.append(record)
            if t % self.cfg.log_interval == 0 or t == self.cfg.iterations - 1:
                logger.info(
                    f"Block {self.state.block_id} iter {t}: loss {record.total:.5f} "
                    f"(photo {record.photometric:.5f}, depth {record.depth:.5f}, pseudo {record.pseudo:.5f}) "
                    f"{record.n_block}+{record.n_aux} Gaussians"
                )
        self.timer.stop()
        return self.state, self.log


def optimize_block(
    state: BlockGaussianState,
    views: Sequence[TrainingView],
    cfg: TrainConfig,
    loss_cfg: Optional[LossConfig] = None,
    seed: Optional[int] = None,
) -> Tuple[BlockGaussianState, TrainingLog]:
    """
    Optimize one block.

    Args:
        state: Initialized block and auxiliary Gaussians
        views: Assigned training views
        cfg: Iterations, batch size, densification and learning rates
        loss_cfg: Loss weights; defaults when omitted
        seed: Random seed; ``cfg.rng_seed ^ block_id`` when omitted

    Returns:
        Tuple of (optimized state, training log)
    """
    return BlockTrainer(state, views, cfg, loss_cfg, seed).run()
