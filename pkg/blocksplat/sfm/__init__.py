"""
BlockSplat SfM

Sparse reconstruction ingestion: COLMAP parsing, images and depth priors.
"""

from .colmap import parse_sparse_model, qvec2rotmat, rotmat2qvec, write_sparse_model
from .images import (
    find_depth_file,
    load_depth_prior,
    load_image,
    read_depth_png,
    read_pfm,
    save_image,
    write_depth_png,
    write_pfm,
)
from .types import CameraIntrinsics, DepthPrior, Pose, SparseModel, SparsePoint, ViewRecord

__all__ = [
    "CameraIntrinsics",
    "DepthPrior",
    "Pose",
    "SparseModel",
    "SparsePoint",
    "ViewRecord",
    "parse_sparse_model",
    "write_sparse_model",
    "qvec2rotmat",
    "rotmat2qvec",
    "load_image",
    "save_image",
    "load_depth_prior",
    "find_depth_file",
    "read_pfm",
    "write_pfm",
    "read_depth_png",
    "write_depth_png",
]
