"""
BlockSplat Configuration

Validated configuration models for every pipeline stage and the loader
that reads them from TOML or JSON files.
"""

import sys
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Union

import orjson
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .exceptions import ConfigurationError
from .utils import deep_merge, get_logger

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = get_logger(__name__)

UpAxis = Literal["auto", "+x", "-x", "+y", "-y", "+z", "-z"]
Rect4 = Tuple[float, float, float, float]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class PartitionConfig(_Section):
    """Partition tree limits, view assignment threshold and ground-plane setup."""

    max_depth: int = Field(default=8, ge=0)
    block_point_threshold: int = Field(default=300, ge=1)
    assign_ratio_threshold: float = Field(default=0.3, gt=0.0, le=1.0)
    roi: Union[Literal["auto"], Rect4] = "auto"
    up_axis: UpAxis = "auto"

    @field_validator("roi")
    @classmethod
    def _check_roi(cls, value):
        if value == "auto":
            return value
        x_min, x_max, z_min, z_max = value
        if not (x_max > x_min and z_max > z_min):
            raise ValueError("roi must be (x_min, x_max, z_min, z_max) with positive area")
        return value


class LossConfig(_Section):
    """Weights and constants of the photometric, depth and pseudo-view terms."""

    lambda_ssim: float = Field(default=0.2, ge=0.0, le=1.0)
    ssim_window: int = Field(default=11, ge=1)
    ssim_sigma: float = Field(default=1.5, gt=0.0)
    pseudo_disparity: float = Field(default=2.0, gt=0.0)
    alpha_mask_threshold: float = Field(default=0.5, ge=0.0, le=1.0)

    @field_validator("ssim_window")
    @classmethod
    def _odd_window(cls, value):
        if value % 2 == 0:
            raise ValueError("ssim_window must be odd")
        return value


class TrainConfig(_Section):
    """Per-block optimization settings."""

    iterations: int = Field(default=3000, ge=0)
    batch_size: int = Field(default=4, ge=1)
    rng_seed: int = 0

    densify_interval: int = Field(default=200, ge=1)
    densify_start: int = Field(default=500, ge=0)
    densify_stop_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    densify_grad_threshold: float = Field(default=2e-4, gt=0.0)
    split_scale_threshold: float = Field(default=0.01, gt=0.0)
    prune_opacity_threshold: float = Field(default=0.005, ge=0.0, lt=1.0)
    opacity_reset_interval: Optional[int] = Field(default=None, ge=1)

    pseudo_start_fraction: float = Field(default=0.25, ge=0.0, le=1.0)

    position_lr_init: float = Field(default=1.6e-4, ge=0.0)
    position_lr_final: float = Field(default=1.6e-6, ge=0.0)
    color_lr: float = Field(default=2.5e-3, ge=0.0)
    opacity_lr: float = Field(default=5e-2, ge=0.0)
    scale_lr: float = Field(default=5e-3, ge=0.0)
    rotation_lr: float = Field(default=1e-3, ge=0.0)

    depth_weight_init: float = Field(default=1.0, gt=0.0)
    depth_weight_final: float = Field(default=0.1, gt=0.0)
    pseudo_weight_init: float = Field(default=0.1, gt=0.0)
    pseudo_weight_final: float = Field(default=1.0, gt=0.0)

    use_auxiliary: bool = True
    use_pseudo_view: bool = True
    use_depth_prior: bool = True

    log_interval: int = Field(default=100, ge=1)
    background: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def densify_stop(self) -> int:
        return int(self.densify_stop_fraction * self.iterations)

    @property
    def pseudo_start(self) -> int:
        return int(self.pseudo_start_fraction * self.iterations)


class PipelineConfig(_Section):
    """Top-level configuration shared by every CLI stage."""

    sfm_dir: Path
    image_dir: Path
    depth_dir: Optional[Path] = None
    output_dir: Path
    sparse_format: Literal["auto", "text", "binary"] = "auto"
    image_downsample: int = Field(default=1, ge=1)
    intrinsics_prescaled: bool = False
    eval_every: int = Field(default=8, ge=0)
    parallel_workers: int = Field(default=1, ge=1)
    seed: int = 0

    partition: PartitionConfig = Field(default_factory=PartitionConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    loss: LossConfig = Field(default_factory=LossConfig)

    def resolve_paths(self, base_dir: Path) -> "PipelineConfig":
        """Return a copy whose relative paths are anchored at ``base_dir``."""
        updates = {}
        for name in ("sfm_dir", "image_dir", "depth_dir", "output_dir"):
            value = getattr(self, name)
            if value is not None and not Path(value).is_absolute():
                updates[name] = (Path(base_dir) / value).resolve()
        return self.model_copy(update=updates)

    def check_inputs(self):
        """Raise ConfigurationError when an input directory is missing."""
        for name in ("sfm_dir", "image_dir", "depth_dir"):
            value = getattr(self, name)
            if value is not None and not Path(value).is_dir():
                raise ConfigurationError(f"{name} does not exist: {value}")

    def to_json_bytes(self) -> bytes:
        return orjson.dumps(
            self.model_dump(mode="json"),
            option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS,
        )


def _read_config_file(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            return orjson.loads(path.read_bytes())
        with open(path, "rb") as f:
            return tomllib.load(f)
    except (orjson.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigurationError(f"cannot parse {path}: {e}")


def load_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """
    Load and validate a pipeline configuration file.

    Args:
        path: TOML or JSON file
        overrides: Nested dictionary merged over the file contents

    Returns:
        PipelineConfig with paths resolved against the file's directory
    """
    path = Path(path)
    raw = _read_config_file(path)
    if overrides:
        raw = deep_merge(raw, overrides)

    try:
        config = PipelineConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(str(e))

    config = config.resolve_paths(path.parent.resolve())
    logger.debug(f"Loaded config from {path}")
    return config


def write_config(config: PipelineConfig, path: Union[str, Path]):
    """Serialize the resolved configuration for provenance."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(config.to_json_bytes())

