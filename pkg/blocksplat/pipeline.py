"""
BlockSplat Pipeline

Stage functions behind the CLI and the on-disk workspace layout they
share. Every stage reads the config plus artifacts of earlier stages.
"""

import multiprocessing as mp
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import orjson

from .config import PipelineConfig, write_config
from .exceptions import BlockSplatError, ConfigurationError, NoViews
from .gaussians.model import BlockGaussianState, init_block_gaussians
from .gaussians.ply import read_ply, write_ply
from .partition.planner import Block, BlockPlan, plan_scene
from .render.rasterizer import render
from .scene.merge import SceneModel, merge_blocks
from .scene.metrics import EvalItem, EvalReport, evaluate_views
from .sfm.colmap import parse_sparse_model
from .sfm.images import find_depth_file, load_depth_prior, load_image, save_image
from .sfm.types import CameraIntrinsics, DepthPrior, SparseModel, ViewRecord
from .training.trainer import TrainingLog, TrainingView, optimize_block
from .utils import Timer, get_logger, setup_logging

logger = get_logger(__name__)


class Workspace:
    """Paths of every artifact under ``config.output_dir``."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.root = Path(config.output_dir)

    @property
    def plan_path(self) -> Path:
        return self.root / "blockplan.json"

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    def block_dir(self, block_id: int) -> Path:
        return self.root / f"block_{block_id}"

    @property
    def scene_dir(self) -> Path:
        return self.root / "scene"

    @property
    def scene_path(self) -> Path:
        return self.scene_dir / "point_cloud.ply"

    @property
    def renders_dir(self) -> Path:
        return self.root / "renders"

    @property
    def eval_report_path(self) -> Path:
        return self.root / "eval_report.json"

    @property
    def eval_timing_path(self) -> Path:
        return self.root / "eval_timing.json"

    def save_config(self):
        write_config(self.config, self.config_path)


def load_model(config: PipelineConfig) -> SparseModel:
    """Parse the sparse model and scale its intrinsics to the working resolution."""
    config.check_inputs()
    model = parse_sparse_model(config.sfm_dir, config.sparse_format)
    factor = config.image_downsample
    if factor > 1 and not config.intrinsics_prescaled:
        model = replace(model, cameras={cid: cam.scaled(factor) for cid, cam in model.cameras.items()})
    return model


def split_views(view_ids: Sequence[int], every: int) -> Tuple[List[int], List[int]]:
    """Training and held-out ids; every ``every``-th view (sorted by id) is held out."""
    ids = sorted(int(v) for v in view_ids)
    if every <= 0:
        return ids, []
    held = set(ids[::every])
    return [v for v in ids if v not in held], [v for v in ids if v in held]


def _load_prior(config: PipelineConfig, view: ViewRecord, cam: CameraIntrinsics) -> DepthPrior:
    path = find_depth_file(config.depth_dir, view.image_path)
    if path is None:
        return DepthPrior.none(view.view_id)
    return load_depth_prior(path, view, cam, config.image_downsample)


def load_training_views(config: PipelineConfig, model: SparseModel, block: Block) -> List[TrainingView]:
    views = []
    for view_id in block.assigned_view_ids:
        view = model.views[view_id]
        cam = model.camera_for(view)
        image = load_image(Path(config.image_dir) / view.image_path, config.image_downsample)
        views.append(TrainingView(view=view, cam=cam, image=image, prior=_load_prior(config, view, cam)))
    return views


def load_eval_items(config: PipelineConfig, model: SparseModel) -> List[EvalItem]:
    _, eval_ids = split_views(model.views, config.eval_every)
    items = []
    for view_id in eval_ids:
        view = model.views[view_id]
        image = load_image(Path(config.image_dir) / view.image_path, config.image_downsample)
        items.append(EvalItem(view=view, cam=model.camera_for(view), image=image, name=view.image_path))
    return items


# Stages

def run_partition(config: PipelineConfig) -> BlockPlan:
    """Partition the scene, assign training views and write ``blockplan.json``."""
    ws = Workspace(config)
    model = load_model(config)
    train_ids, eval_ids = split_views(model.views, config.eval_every)
    logger.info(f"Partitioning with {len(train_ids)} training and {len(eval_ids)} held-out views")
    plan = plan_scene(model, config.partition, candidate_view_ids=train_ids)
    plan.write(ws.plan_path)
    ws.save_config()
    return plan


def block_seed(config: PipelineConfig, block_id: int) -> int:
    return config.seed ^ block_id


def run_optimize_block(config: PipelineConfig, block_id: int) -> TrainingLog:
    """Initialize, optimize and checkpoint one block."""
    ws = Workspace(config)
    plan = BlockPlan.read(ws.plan_path)
    if block_id not in plan.block_ids:
        raise ConfigurationError(f"unknown block id {block_id}; plan has {plan.block_ids}")
    block = plan.block(block_id)
    if not block.assigned_view_ids:
        raise NoViews(block_id)

    model = load_model(config)
    state = init_block_gaussians(model, block, plan, use_auxiliary=config.train.use_auxiliary)
    views = load_training_views(config, model, block)
    state, log = optimize_block(state, views, config.train, config.loss, seed=block_seed(config, block_id))

    out = ws.block_dir(block_id)
    write_ply(state.block, out / "point_cloud.ply")
    write_ply(state.auxiliary, out / "auxiliary.ply")
    log.write(out / "train_log.jsonl")
    logger.info(f"Block {block_id}: wrote {len(state.block)} block and {len(state.auxiliary)} auxiliary Gaussians")
    return log


def _optimize_worker(args) -> Tuple[int, Optional[str]]:
    config, block_id, log_level = args
    setup_logging(log_level)
    try:
        run_optimize_block(config, block_id)
        return block_id, None
    except BlockSplatError as e:
        return block_id, e.message
    except Exception as e:
        return block_id, f"{type(e).__name__}: {e}"


def trainable_blocks(plan: BlockPlan) -> List[int]:
    """Blocks with points and supervising views; others are skipped with a warning."""
    ids = []
    for block in plan.blocks:
        if block.point_count == 0:
            logger.warning(f"Block {block.block_id} holds no sparse points; skipped")
        elif not block.is_supervised:
            logger.warning(f"Block {block.block_id} has no supervising views; skipped")
        else:
            ids.append(block.block_id)
    return ids


def run_optimize(
    config: PipelineConfig,
    block_ids: Optional[Sequence[int]] = None,
    workers: Optional[int] = None,
    log_level: str = "INFO",
) -> Dict[int, Optional[str]]:
    """
    Optimize blocks sequentially or in worker processes.

    Args:
        config: Pipeline configuration
        block_ids: Blocks to run; all trainable blocks when None
        workers: Worker processes; ``config.parallel_workers`` when None
        log_level: Log level set up inside each worker

    Returns:
        Mapping of block id to None on success or the error message
    """
    ws = Workspace(config)
    plan = BlockPlan.read(ws.plan_path)
    if block_ids is None:
        block_ids = trainable_blocks(plan)
    for block_id in block_ids:
        if block_id not in plan.block_ids:
            raise ConfigurationError(f"unknown block id {block_id}; plan has {plan.block_ids}")
    ws.save_config()

    workers = workers or config.parallel_workers
    jobs = [(config, int(block_id), log_level) for block_id in block_ids]
    if workers <= 1 or len(jobs) <= 1:
        results = [_optimize_worker(job) for job in jobs]
    else:
        with mp.get_context("spawn").Pool(min(workers, len(jobs))) as pool:
            results = pool.map(_optimize_worker, jobs)

    outcome = dict(results)
    for block_id, error in sorted(outcome.items()):
        if error:
            logger.error(f"Block {block_id} failed: {error}")
    return outcome


def load_block_state(ws: Workspace, plan: BlockPlan, block_id: int) -> BlockGaussianState:
    out = ws.block_dir(block_id)
    return BlockGaussianState(
        block_id=block_id,
        block=read_ply(out / "point_cloud.ply"),
        auxiliary=read_ply(out / "auxiliary.ply"),
        block_bounds=plan.block(block_id).bounds,
        alignment=plan.alignment,
    )


def run_merge(config: PipelineConfig) -> SceneModel:
    """Merge every checkpointed block into ``scene/point_cloud.ply``."""
    ws = Workspace(config)
    plan = BlockPlan.read(ws.plan_path)
    states = []
    for block_id in plan.block_ids:
        if not (ws.block_dir(block_id) / "point_cloud.ply").is_file():
            logger.warning(f"Block {block_id} has no checkpoint; left out of the merge")
            continue
        states.append(load_block_state(ws, plan, block_id))
    if not states:
        raise ConfigurationError("no block checkpoints found (run the optimize stage first)")

    scene = merge_blocks(states, plan)
    write_ply(scene.gaussians, ws.scene_path)
    (ws.scene_dir / "provenance.json").write_bytes(
        orjson.dumps({"block_id": scene.provenance}, option=orjson.OPT_SERIALIZE_NUMPY)
    )
    ws.save_config()
    return scene


def _load_scene(ws: Workspace):
    if not ws.scene_path.is_file():
        raise ConfigurationError(f"merged scene not found: {ws.scene_path} (run the merge stage first)")
    return read_ply(ws.scene_path)


def read_pose_file(path: Union[str, Path], model: SparseModel) -> List[Tuple[str, CameraIntrinsics, ViewRecord]]:
    """
    Parse a JSON list of ``{"name", "camera_id", "rotation", "translation"}``.

    Raises:
        ConfigurationError: If the file is unreadable or an entry is malformed
    """
    path = Path(path)
    try:
        entries = orjson.loads(path.read_bytes())
    except (OSError, orjson.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read pose file {path}: {e}")
    if not isinstance(entries, list):
        raise ConfigurationError(f"pose file {path} must hold a JSON list")

    poses = []
    for i, entry in enumerate(entries):
        try:
            cam = model.cameras[int(entry["camera_id"])]
            view = ViewRecord(
                view_id=-(i + 1),
                intrinsics_id=cam.camera_id,
                rotation=np.asarray(entry["rotation"], dtype=np.float64),
                translation=np.asarray(entry["translation"], dtype=np.float64),
                image_path=str(entry["name"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"pose file {path}: entry {i} is malformed ({e})")
        poses.append((str(entry["name"]), cam, view))
    return poses


def run_render(config: PipelineConfig, poses_path: Optional[Union[str, Path]] = None) -> List[Path]:
    """Render the merged scene for the eval split or a pose file into ``renders/``."""
    ws = Workspace(config)
    model = load_model(config)
    if poses_path is not None:
        targets = read_pose_file(poses_path, model)
    else:
        _, eval_ids = split_views(model.views, config.eval_every)
        targets = [(model.views[v].image_path, model.camera_for(model.views[v]), model.views[v]) for v in eval_ids]
    if not targets:
        logger.info("No poses to render")
        return []

    gaussians = _load_scene(ws)
    written = []
    for name, cam, view in targets:
        out = ws.renders_dir / f"{Path(name).stem}.png"
        image = render(gaussians, cam, view.pose, config.train.background, keep_trace=False).color
        save_image(out, image)
        written.append(out)
    logger.info(f"Rendered {len(written)} views to {ws.renders_dir}")
    return written


def run_eval(config: PipelineConfig) -> EvalReport:
    """Score the merged scene on the held-out views."""
    ws = Workspace(config)
    model = load_model(config)
    items = load_eval_items(config, model)
    if not items:
        logger.warning("No held-out views (eval_every is 0); the report is empty")
    gaussians = _load_scene(ws)
    with Timer() as timer:
        report = evaluate_views(gaussians, items, config.train.background)
    report.write(ws.eval_report_path, ws.eval_timing_path)
    logger.debug(f"Evaluation took {timer.elapsed():.2f}s")
    return report
