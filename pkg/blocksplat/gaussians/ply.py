"""
BlockSplat PLY IO

Binary little-endian PLY persistence in the common splatting layout.
Opacity, scale and rotation are stored pre-activation; colour is stored
as the degree-0 spherical-harmonic coefficient.
"""

from pathlib import Path
from typing import Union

import numpy as np
from plyfile import PlyData, PlyElement, PlyElementParseError, PlyHeaderParseError

from ..exceptions import MissingFile, TruncatedFile, UnknownAttribute, UnreadableFile
from ..utils import get_logger
from .model import GaussianSet

logger = get_logger(__name__)

SH_C0 = 0.28209479177387814

ATTRIBUTES = (
    ["x", "y", "z", "nx", "ny", "nz"]
    + [f"f_dc_{i}" for i in range(3)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)
REQUIRED = [name for name in ATTRIBUTES if name not in ("nx", "ny", "nz")]


def rgb_to_sh(rgb: np.ndarray) -> np.ndarray:
    return (rgb - 0.5) / SH_C0


def sh_to_rgb(sh: np.ndarray) -> np.ndarray:
    return sh * SH_C0 + 0.5


def write_ply(gaussians: GaussianSet, path: Union[str, Path]):
    """Write a GaussianSet as a binary little-endian PLY with float32 attributes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    n = len(gaussians)
    columns = np.concatenate([
        gaussians.positions,
        np.zeros((n, 3)),
        rgb_to_sh(gaussians.colors),
        gaussians.opacity_logits[:, None],
        gaussians.log_scales,
        gaussians.rotations,
    ], axis=1)
    if not np.all(np.isfinite(columns)):
        raise ValueError("Refusing to write non-finite Gaussian parameters")

    data = columns.astype("<f4")
    elements = np.empty(n, dtype=[(name, "<f4") for name in ATTRIBUTES])
    for i, name in enumerate(ATTRIBUTES):
        elements[name] = data[:, i]
    el = PlyElement.describe(elements, "vertex")
    PlyData([el], text=False, byte_order="<").write(str(path))


def read_ply(path: Union[str, Path]) -> GaussianSet:
    """Read a splat PLY written by ``write_ply`` or a compatible tool."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        plydata = PlyData.read(str(path), mmap=False)
    except PlyHeaderParseError as e:
        raise UnreadableFile(str(path), str(e))
    except (PlyElementParseError, ValueError, EOFError):
        raise TruncatedFile(str(path))

    if "vertex" not in plydata:
        raise UnknownAttribute("vertex")
    vertex = plydata["vertex"]
    names = {p.name for p in vertex.properties}
    for name in REQUIRED:
        if name not in names:
            raise UnknownAttribute(name)

    def col(*fields):
        return np.stack([np.asarray(vertex[f], dtype=np.float64) for f in fields], axis=1)

    return GaussianSet(
        positions=col("x", "y", "z"),
        rotations=col("rot_0", "rot_1", "rot_2", "rot_3"),
        log_scales=col("scale_0", "scale_1", "scale_2"),
        opacity_logits=np.asarray(vertex["opacity"], dtype=np.float64),
        colors=sh_to_rgb(col("f_dc_0", "f_dc_1", "f_dc_2")),
    )
