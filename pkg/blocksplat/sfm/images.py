"""
BlockSplat Image IO

Ground-truth image loading plus PFM and 16-bit PNG depth priors.
"""

import re
from pathlib import Path
from typing import Optional, Union

import numpy as np
import orjson
from PIL import Image, UnidentifiedImageError

from ..exceptions import DimensionMismatch, MissingFile, UnreadableFile
from ..utils import get_logger
from .types import CameraIntrinsics, DepthPrior, ViewRecord

logger = get_logger(__name__)

_PFM_DIMS = re.compile(rb"^\s*(\d+)\s+(\d+)\s*$")


def box_downsample(array: np.ndarray, factor: int) -> np.ndarray:
    """Average non-overlapping ``factor`` x ``factor`` blocks; trailing rows/columns are cropped."""
    if factor == 1:
        return array
    h = array.shape[0] // factor
    w = array.shape[1] // factor
    trimmed = array[: h * factor, : w * factor]
    shape = (h, factor, w, factor) + array.shape[2:]
    return trimmed.reshape(shape).mean(axis=(1, 3))


def load_image(path: Union[str, Path], downsample: int = 1) -> np.ndarray:
    """
    Load an 8-bit PNG/JPEG as an (H, W, 3) float64 array in [0, 1].

    Values are divided by 255 without any gamma change.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError) as e:
        raise UnreadableFile(str(path), str(e))
    return box_downsample(rgb, downsample)


def save_image(path: Union[str, Path], image: np.ndarray):
    """Write an (H, W, 3) float image in [0, 1] as an 8-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path)


def read_pfm(path: Union[str, Path]) -> np.ndarray:
    """Read a single-channel PFM into an (H, W) float64 array, top row first."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    data = path.read_bytes()
    try:
        header, dims, scale_line, payload = data.split(b"\n", 3)
    except ValueError:
        raise UnreadableFile(str(path), "incomplete PFM header")

    if header.strip() != b"Pf":
        raise UnreadableFile(str(path), "only single-channel 'Pf' files are supported")
    match = _PFM_DIMS.match(dims)
    if match is None:
        raise UnreadableFile(str(path), "bad PFM dimensions")
    width, height = int(match.group(1)), int(match.group(2))
    try:
        scale = float(scale_line)
    except ValueError:
        raise UnreadableFile(str(path), "bad PFM scale")

    dtype = "<f4" if scale < 0 else ">f4"
    count = width * height
    if len(payload) < 4 * count:
        raise UnreadableFile(str(path), "PFM payload shorter than its header")
    values = np.frombuffer(payload, dtype=dtype, count=count).reshape(height, width)
    # PFM rows are stored bottom to top
    return np.flipud(values).astype(np.float64)


def write_pfm(path: Union[str, Path], depth: np.ndarray):
    """Write an (H, W) array as a little-endian single-channel PFM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    depth = np.asarray(depth, dtype="<f4")
    height, width = depth.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    path.write_bytes(header + np.flipud(depth).tobytes())


def read_depth_png(path: Union[str, Path]) -> np.ndarray:
    """Read a 16-bit PNG depth map scaled by the ``<stem>.json`` sidecar."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    sidecar = path.with_suffix(".json")
    if not sidecar.is_file():
        raise UnreadableFile(str(path), f"missing scale sidecar {sidecar.name}")
    try:
        scale = float(orjson.loads(sidecar.read_bytes())["scale"])
    except (orjson.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise UnreadableFile(str(sidecar), f"bad scale sidecar: {e}")

    try:
        with Image.open(path) as img:
            if img.mode not in ("I;16", "I;16B", "I;16L", "I"):
                raise UnreadableFile(str(path), f"expected a 16-bit grayscale PNG, got mode {img.mode}")
            raw = np.asarray(img, dtype=np.float64)
    except (UnidentifiedImageError, OSError) as e:
        raise UnreadableFile(str(path), str(e))
    return raw * scale


def write_depth_png(path: Union[str, Path], depth: np.ndarray, scale: float):
    """Write depth as a 16-bit PNG of ``round(depth / scale)`` plus its sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    depth = np.nan_to_num(np.asarray(depth, dtype=np.float64), nan=0.0)
    raw = np.clip(np.round(depth / scale), 0, 65535).astype(np.uint16)
    Image.fromarray(raw).save(path)
    path.with_suffix(".json").write_bytes(orjson.dumps({"scale": scale}))


def _downsample_depth(depth: np.ndarray, factor: int) -> np.ndarray:
    valid = np.isfinite(depth) & (depth > 0)
    total = box_downsample(np.where(valid, depth, 0.0), factor) * factor * factor
    count = box_downsample(valid.astype(np.float64), factor) * factor * factor
    out = np.full(total.shape, np.nan)
    np.divide(total, count, out=out, where=count > 0)
    return out


def load_depth_prior(
    path: Union[str, Path],
    view: ViewRecord,
    camera: CameraIntrinsics,
    downsample: int = 1,
) -> DepthPrior:
    """
    Load a depth prior for ``view``.

    Args:
        path: ``.pfm`` file or 16-bit ``.png`` with a JSON scale sidecar
        view: View the prior belongs to
        camera: Intrinsics the prior must match (after downsampling)
        downsample: Factor applied when the file is at the original resolution

    Returns:
        DepthPrior whose non-positive or non-finite samples are invalid (nan)
    """
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        depth = read_pfm(path)
    elif path.suffix.lower() == ".png":
        depth = read_depth_png(path)
    else:
        raise UnreadableFile(str(path), "depth priors must be .pfm or .png")

    expected = (camera.height, camera.width)
    if downsample > 1 and depth.shape == (camera.height * downsample, camera.width * downsample):
        depth = _downsample_depth(depth, downsample)
    if depth.shape != expected:
        raise DimensionMismatch(expected, depth.shape, what=f"depth prior of view {view.view_id}")

    depth = np.where(np.isfinite(depth) & (depth > 0), depth, np.nan)
    return DepthPrior(view_id=view.view_id, depth=depth, source="file")


def find_depth_file(depth_dir: Optional[Path], image_name: str) -> Optional[Path]:
    """Locate ``<stem>.pfm`` or ``<stem>.png`` for an image inside ``depth_dir``."""
    if depth_dir is None:
        return None
    stem = Path(image_name).stem
    for suffix in (".pfm", ".png"):
        candidate = Path(depth_dir) / f"{stem}{suffix}"
        if candidate.is_file():
            return candidate
    return None
