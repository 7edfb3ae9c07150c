"""
BlockSplat COLMAP IO

Readers and writers for the COLMAP sparse layout (``cameras``, ``images``
and ``points3D`` in text or binary form) and their conversion into a
validated SparseModel.
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from ..exceptions import (
    MalformedRecord,
    MissingFile,
    UnsupportedCameraModel,
    VisibilityAsymmetry,
)
from ..utils import get_logger
from .types import CameraIntrinsics, SparseModel, SparsePoint, ViewRecord

logger = get_logger(__name__)

# (model_id, name, num_params) as numbered by COLMAP
CAMERA_MODELS = [
    (0, "SIMPLE_PINHOLE", 3),
    (1, "PINHOLE", 4),
    (2, "SIMPLE_RADIAL", 4),
    (3, "RADIAL", 5),
    (4, "OPENCV", 8),
    (5, "OPENCV_FISHEYE", 8),
    (6, "FULL_OPENCV", 12),
    (7, "FOV", 5),
    (8, "SIMPLE_RADIAL_FISHEYE", 4),
    (9, "RADIAL_FISHEYE", 5),
    (10, "THIN_PRISM_FISHEYE", 12),
]
CAMERA_MODEL_IDS = {model_id: (name, n) for model_id, name, n in CAMERA_MODELS}
CAMERA_MODEL_NAMES = {name: (model_id, n) for model_id, name, n in CAMERA_MODELS}
SUPPORTED_MODELS = ("SIMPLE_PINHOLE", "PINHOLE")


@dataclass
class _RawCamera:
    camera_id: int
    model: str
    width: int
    height: int
    params: Tuple[float, ...]
    offset: int


@dataclass
class _RawImage:
    image_id: int
    qvec: np.ndarray
    tvec: np.ndarray
    camera_id: int
    name: str
    xys: np.ndarray
    point3d_ids: np.ndarray
    offset: int


@dataclass
class _RawPoint:
    point_id: int
    xyz: np.ndarray
    rgb: np.ndarray
    error: float
    image_ids: np.ndarray
    point2d_idxs: np.ndarray
    offset: int


def qvec2rotmat(qvec) -> np.ndarray:
    """Convert a (w, x, y, z) quaternion to a rotation matrix."""
    qvec = np.asarray(qvec, dtype=np.float64)
    qvec = qvec / np.linalg.norm(qvec)
    w, x, y, z = qvec
    return np.array([
        [1 - 2 * y * y - 2 * z * z, 2 * x * y - 2 * w * z, 2 * z * x + 2 * w * y],
        [2 * x * y + 2 * w * z, 1 - 2 * x * x - 2 * z * z, 2 * y * z - 2 * w * x],
        [2 * z * x - 2 * w * y, 2 * y * z + 2 * w * x, 1 - 2 * x * x - 2 * y * y],
    ])


def rotmat2qvec(R) -> np.ndarray:
    """Convert a rotation matrix to a (w, x, y, z) quaternion with w >= 0."""
    rxx, ryx, rzx, rxy, ryy, rzy, rxz, ryz, rzz = np.asarray(R, dtype=np.float64).flat
    K = np.array([
        [rxx - ryy - rzz, 0, 0, 0],
        [ryx + rxy, ryy - rxx - rzz, 0, 0],
        [rzx + rxz, rzy + ryz, rzz - rxx - ryy, 0],
        [ryz - rzy, rzx - rxz, rxy - ryx, rxx + ryy + rzz],
    ]) / 3.0
    eigvals, eigvecs = np.linalg.eigh(K)
    qvec = eigvecs[np.array([3, 0, 1, 2]), np.argmax(eigvals)]
    if qvec[0] < 0:
        qvec *= -1
    return qvec


class _BinaryReader:
    """Sequential little-endian reader that reports the failing byte offset."""

    __slots__ = ("data", "offset", "path")

    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def read(self, fmt: str):
        size = struct.calcsize("<" + fmt)
        if self.offset + size > len(self.data):
            raise MalformedRecord(self.offset, self.path, "unexpected end of file")
        values = struct.unpack_from("<" + fmt, self.data, self.offset)
        self.offset += size
        return values

    def read_cstring(self) -> str:
        end = self.data.find(b"\x00", self.offset)
        if end < 0:
            raise MalformedRecord(self.offset, self.path, "unterminated image name")
        raw = self.data[self.offset:end]
        start = self.offset
        self.offset = end + 1
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedRecord(start, self.path, "image name is not utf-8")

    def done(self) -> bool:
        return self.offset == len(self.data)


def _require(path: Path) -> Path:
    if not path.is_file():
        raise MissingFile(str(path))
    return path


def _text_records(path: Path):
    """Yield (line_number, fields) for non-comment lines."""
    with open(_require(path), encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if line and not line.startswith("#"):
                yield number, line.split()


# Readers

def read_cameras_text(path: Path) -> List[_RawCamera]:
    cameras = []
    for number, elems in _text_records(path):
        try:
            model = elems[1]
            if model not in CAMERA_MODEL_NAMES:
                raise UnsupportedCameraModel(model)
            cameras.append(_RawCamera(
                camera_id=int(elems[0]),
                model=model,
                width=int(elems[2]),
                height=int(elems[3]),
                params=tuple(float(p) for p in elems[4:]),
                offset=number,
            ))
        except (IndexError, ValueError) as e:
            raise MalformedRecord(number, path, str(e))
    return cameras


def read_cameras_binary(path: Path) -> List[_RawCamera]:
    reader = _BinaryReader(_require(path).read_bytes(), path)
    cameras = []
    (num_cameras,) = reader.read("Q")
    for _ in range(num_cameras):
        start = reader.offset
        camera_id, model_id, width, height = reader.read("iiQQ")
        if model_id not in CAMERA_MODEL_IDS:
            raise MalformedRecord(start, path, f"unknown camera model id {model_id}")
        model, num_params = CAMERA_MODEL_IDS[model_id]
        params = reader.read("d" * num_params)
        cameras.append(_RawCamera(camera_id, model, width, height, tuple(params), start))
    if not reader.done():
        raise MalformedRecord(reader.offset, path, "trailing bytes")
    return cameras


def read_images_text(path: Path) -> List[_RawImage]:
    # Each image is a header line followed by a POINTS2D line that may be empty.
    lines = _require(path).read_text(encoding="utf-8").splitlines()
    images = []
    number = 0
    while number < len(lines):
        line = lines[number].strip()
        number += 1
        if not line or line.startswith("#"):
            continue

        elems = line.split()
        try:
            image_id = int(elems[0])
            qvec = np.array([float(v) for v in elems[1:5]])
            tvec = np.array([float(v) for v in elems[5:8]])
            camera_id = int(elems[8])
            name = elems[9]
            if len(qvec) != 4 or len(tvec) != 3:
                raise ValueError("pose needs 4 quaternion and 3 translation values")
        except (IndexError, ValueError) as e:
            raise MalformedRecord(number, path, str(e))

        obs = lines[number].split() if number < len(lines) else []
        number += 1
        if len(obs) % 3 != 0:
            raise MalformedRecord(number, path, "POINTS2D must be (X, Y, POINT3D_ID) triples")
        try:
            xys = np.array([[float(x), float(y)] for x, y in zip(obs[0::3], obs[1::3])]).reshape(-1, 2)
            point3d_ids = np.array([int(i) for i in obs[2::3]], dtype=np.int64)
        except ValueError as e:
            raise MalformedRecord(number, path, str(e))

        images.append(_RawImage(image_id, qvec, tvec, camera_id, name, xys, point3d_ids, number - 1))
    return images


def read_images_binary(path: Path) -> List[_RawImage]:
    reader = _BinaryReader(_require(path).read_bytes(), path)
    images = []
    (num_images,) = reader.read("Q")
    for _ in range(num_images):
        start = reader.offset
        props = reader.read("idddddddi")
        name = reader.read_cstring()
        (num_points2d,) = reader.read("Q")
        flat = reader.read("ddq" * num_points2d)
        xys = np.column_stack([flat[0::3], flat[1::3]]).reshape(-1, 2).astype(np.float64)
        point3d_ids = np.array(flat[2::3], dtype=np.int64)
        images.append(_RawImage(
            image_id=props[0],
            qvec=np.array(props[1:5]),
            tvec=np.array(props[5:8]),
            camera_id=props[8],
            name=name,
            xys=xys,
            point3d_ids=point3d_ids,
            offset=start,
        ))
    if not reader.done():
        raise MalformedRecord(reader.offset, path, "trailing bytes")
    return images


def read_points3d_text(path: Path) -> List[_RawPoint]:
    points = []
    for number, elems in _text_records(path):
        try:
            track = elems[8:]
            if len(track) % 2 != 0:
                raise ValueError("track must be (IMAGE_ID, POINT2D_IDX) pairs")
            points.append(_RawPoint(
                point_id=int(elems[0]),
                xyz=np.array([float(v) for v in elems[1:4]]),
                rgb=np.array([int(v) for v in elems[4:7]]),
                error=float(elems[7]),
                image_ids=np.array([int(v) for v in track[0::2]], dtype=np.int64),
                point2d_idxs=np.array([int(v) for v in track[1::2]], dtype=np.int64),
                offset=number,
            ))
        except (IndexError, ValueError) as e:
            raise MalformedRecord(number, path, str(e))
    return points


def read_points3d_binary(path: Path) -> List[_RawPoint]:
    reader = _BinaryReader(_require(path).read_bytes(), path)
    points = []
    (num_points,) = reader.read("Q")
    for _ in range(num_points):
        start = reader.offset
        props = reader.read("QdddBBBd")
        (track_length,) = reader.read("Q")
        track = reader.read("ii" * track_length)
        points.append(_RawPoint(
            point_id=props[0],
            xyz=np.array(props[1:4]),
            rgb=np.array(props[4:7]),
            error=float(props[7]),
            image_ids=np.array(track[0::2], dtype=np.int64),
            point2d_idxs=np.array(track[1::2], dtype=np.int64),
            offset=start,
        ))
    if not reader.done():
        raise MalformedRecord(reader.offset, path, "trailing bytes")
    return points


# Assembly

def _to_intrinsics(raw: _RawCamera, path: Path) -> CameraIntrinsics:
    if raw.model not in SUPPORTED_MODELS:
        raise UnsupportedCameraModel(raw.model)
    expected = CAMERA_MODEL_NAMES[raw.model][1]
    if len(raw.params) != expected:
        raise MalformedRecord(raw.offset, path, f"{raw.model} takes {expected} parameters")
    if raw.model == "SIMPLE_PINHOLE":
        f, cx, cy = raw.params
        fx = fy = f
    else:
        fx, fy, cx, cy = raw.params
    try:
        return CameraIntrinsics(
            width=int(raw.width), height=int(raw.height),
            fx=float(fx), fy=float(fy), cx=float(cx), cy=float(cy),
            camera_id=int(raw.camera_id), model=raw.model,
        )
    except ValueError as e:
        raise MalformedRecord(raw.offset, path, str(e))


def _assemble(raw_cameras, raw_images, raw_points, paths) -> SparseModel:
    cam_path, img_path, pts_path = paths

    cameras: Dict[int, CameraIntrinsics] = {}
    for raw in raw_cameras:
        cameras[int(raw.camera_id)] = _to_intrinsics(raw, cam_path)

    views: Dict[int, ViewRecord] = {}
    for raw in raw_images:
        if int(raw.camera_id) not in cameras:
            raise MalformedRecord(raw.offset, img_path, f"unknown camera id {raw.camera_id}")
        if not np.all(np.isfinite(raw.qvec)) or np.linalg.norm(raw.qvec) == 0:
            raise MalformedRecord(raw.offset, img_path, "invalid quaternion")
        tracked = raw.point3d_ids[raw.point3d_ids >= 0]
        try:
            views[int(raw.image_id)] = ViewRecord(
                view_id=int(raw.image_id),
                intrinsics_id=int(raw.camera_id),
                rotation=qvec2rotmat(raw.qvec),
                translation=raw.tvec,
                image_path=raw.name,
                visible_point_ids=frozenset(int(i) for i in tracked),
                keypoints=raw.xys,
                keypoint_point_ids=raw.point3d_ids,
            )
        except ValueError as e:
            raise MalformedRecord(raw.offset, img_path, str(e))

    points: Dict[int, SparsePoint] = {}
    for raw in raw_points:
        pid = int(raw.point_id)
        for vid in raw.image_ids.tolist():
            if vid not in views:
                raise VisibilityAsymmetry(pid, vid, "point track names an unknown view")
            if pid not in views[vid].visible_point_ids:
                raise VisibilityAsymmetry(pid, vid, "view does not list the point")
        try:
            points[pid] = SparsePoint(
                point_id=pid,
                position=raw.xyz,
                color=np.asarray(raw.rgb, dtype=np.float64) / 255.0,
                observing_view_ids=frozenset(raw.image_ids.tolist()),
                error=raw.error,
            )
        except ValueError as e:
            raise MalformedRecord(raw.offset, pts_path, str(e))

    for vid, view in views.items():
        for pid in view.visible_point_ids:
            if pid not in points:
                raise VisibilityAsymmetry(pid, vid, "view lists an unknown point")
            if vid not in points[pid].observing_view_ids:
                raise VisibilityAsymmetry(pid, vid, "point track does not list the view")

    return SparseModel(
        cameras={k: cameras[k] for k in sorted(cameras)},
        views={k: views[k] for k in sorted(views)},
        points={k: points[k] for k in sorted(points)},
    )


def detect_format(dir_path: Path) -> str:
    """Return "binary" or "text" depending on which complete file set exists."""
    for fmt, ext in (("binary", ".bin"), ("text", ".txt")):
        if all((dir_path / f"{name}{ext}").is_file() for name in ("cameras", "images", "points3D")):
            return fmt
    for name in ("cameras", "images", "points3D"):
        if not (dir_path / f"{name}.bin").is_file() and not (dir_path / f"{name}.txt").is_file():
            raise MissingFile(str(dir_path / f"{name}.bin"))
    raise MissingFile(str(dir_path / "points3D.bin"))


def parse_sparse_model(dir_path: Union[str, Path], format: str = "auto") -> SparseModel:
    """
    Parse a COLMAP sparse reconstruction directory.

    Args:
        dir_path: Directory holding cameras/images/points3D files
        format: "auto", "text" or "binary"

    Returns:
        SparseModel with symmetric view/point visibility
    """
    dir_path = Path(dir_path)
    if format == "auto":
        format = detect_format(dir_path)

    if format == "binary":
        paths = tuple(dir_path / f"{name}.bin" for name in ("cameras", "images", "points3D"))
        raw = (read_cameras_binary(paths[0]), read_images_binary(paths[1]), read_points3d_binary(paths[2]))
    elif format == "text":
        paths = tuple(dir_path / f"{name}.txt" for name in ("cameras", "images", "points3D"))
        raw = (read_cameras_text(paths[0]), read_images_text(paths[1]), read_points3d_text(paths[2]))
    else:
        raise ValueError(f"Unknown sparse format: {format}")

    model = _assemble(*raw, paths)
    logger.info(
        f"Parsed {format} sparse model from {dir_path}: "
        f"{len(model.cameras)} cameras, {len(model.views)} views, {len(model.points)} points"
    )
    return model


# Writers

def _observations(model: SparseModel, view: ViewRecord) -> Tuple[np.ndarray, np.ndarray]:
    """2D observations of a view, projecting track points when none are stored."""
    if view.keypoints is not None and view.keypoint_point_ids is not None:
        return np.asarray(view.keypoints, dtype=np.float64).reshape(-1, 2), np.asarray(view.keypoint_point_ids, dtype=np.int64)

    ids = np.array(sorted(view.visible_point_ids), dtype=np.int64)
    if len(ids) == 0:
        return np.zeros((0, 2)), ids
    cam = model.camera_for(view)
    pc = view.pose.world_to_camera(model.point_array(ids))
    z = np.where(np.abs(pc[:, 2]) > 1e-12, pc[:, 2], 1e-12)
    xys = np.column_stack([cam.fx * pc[:, 0] / z + cam.cx, cam.fy * pc[:, 1] / z + cam.cy])
    return xys, ids


def _camera_params(cam: CameraIntrinsics) -> Tuple[str, Tuple[float, ...]]:
    if cam.model == "SIMPLE_PINHOLE" and cam.fx == cam.fy:
        return "SIMPLE_PINHOLE", (cam.fx, cam.cx, cam.cy)
    return "PINHOLE", (cam.fx, cam.fy, cam.cx, cam.cy)


def _tracks(model: SparseModel, observations) -> Dict[int, List[Tuple[int, int]]]:
    tracks: Dict[int, List[Tuple[int, int]]] = {pid: [] for pid in model.points}
    for vid in sorted(model.views):
        _, ids = observations[vid]
        seen = set()
        for idx, pid in enumerate(ids.tolist()):
            if pid >= 0 and pid not in seen and pid in tracks:
                tracks[pid].append((vid, idx))
                seen.add(pid)
    return tracks


def _rgb8(color: np.ndarray) -> Tuple[int, int, int]:
    rgb = np.clip(np.round(np.asarray(color) * 255.0), 0, 255).astype(int)
    return int(rgb[0]), int(rgb[1]), int(rgb[2])


def write_sparse_model(model: SparseModel, dir_path: Union[str, Path], format: str = "binary"):
    """Write a SparseModel in the COLMAP text or binary layout."""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    observations = {vid: _observations(model, view) for vid, view in model.views.items()}
    tracks = _tracks(model, observations)

    if format == "binary":
        _write_binary(model, dir_path, observations, tracks)
    elif format == "text":
        _write_text(model, dir_path, observations, tracks)
    else:
        raise ValueError(f"Unknown sparse format: {format}")
    logger.debug(f"Wrote {format} sparse model to {dir_path}")


def _write_binary(model, dir_path: Path, observations, tracks):
    out = bytearray(struct.pack("<Q", len(model.cameras)))
    for cid in sorted(model.cameras):
        cam = model.cameras[cid]
        name, params = _camera_params(cam)
        out += struct.pack("<iiQQ", cid, CAMERA_MODEL_NAMES[name][0], cam.width, cam.height)
        out += struct.pack("<" + "d" * len(params), *params)
    (dir_path / "cameras.bin").write_bytes(bytes(out))

    out = bytearray(struct.pack("<Q", len(model.views)))
    for vid in sorted(model.views):
        view = model.views[vid]
        qvec = rotmat2qvec(view.rotation)
        out += struct.pack("<idddddddi", vid, *qvec.tolist(), *view.translation.tolist(), view.intrinsics_id)
        out += view.image_path.encode("utf-8") + b"\x00"
        xys, ids = observations[vid]
        out += struct.pack("<Q", len(ids))
        for (x, y), pid in zip(xys.tolist(), ids.tolist()):
            out += struct.pack("<ddq", x, y, pid)
    (dir_path / "images.bin").write_bytes(bytes(out))

    out = bytearray(struct.pack("<Q", len(model.points)))
    for pid in sorted(model.points):
        point = model.points[pid]
        out += struct.pack("<QdddBBBd", pid, *point.position.tolist(), *_rgb8(point.color), point.error)
        track = tracks[pid]
        out += struct.pack("<Q", len(track))
        for vid, idx in track:
            out += struct.pack("<ii", vid, idx)
    (dir_path / "points3D.bin").write_bytes(bytes(out))


def _write_text(model, dir_path: Path, observations, tracks):
    lines = [
        "# Camera list with one line of data per camera:",
        "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]",
        f"# Number of cameras: {len(model.cameras)}",
    ]
    for cid in sorted(model.cameras):
        cam = model.cameras[cid]
        name, params = _camera_params(cam)
        lines.append(" ".join([str(cid), name, str(cam.width), str(cam.height)] + [repr(float(p)) for p in params]))
    (dir_path / "cameras.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = [
        "# Image list with two lines of data per image:",
        "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
        "#   POINTS2D[] as (X, Y, POINT3D_ID)",
        f"# Number of images: {len(model.views)}",
    ]
    for vid in sorted(model.views):
        view = model.views[vid]
        qvec = rotmat2qvec(view.rotation)
        header = [str(vid)] + [repr(float(v)) for v in qvec] + [repr(float(v)) for v in view.translation]
        lines.append(" ".join(header + [str(view.intrinsics_id), view.image_path]))
        xys, ids = observations[vid]
        lines.append(" ".join(f"{x!r} {y!r} {pid}" for (x, y), pid in zip(xys.tolist(), ids.tolist())))
    (dir_path / "images.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = [
        "# 3D point list with one line of data per point:",
        "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)",
        f"# Number of points: {len(model.points)}",
    ]
    for pid in sorted(model.points):
        point = model.points[pid]
        fields = [str(pid)] + [repr(float(v)) for v in point.position]
        fields += [str(c) for c in _rgb8(point.color)] + [repr(float(point.error))]
        for vid, idx in tracks[pid]:
            fields += [str(vid), str(idx)]
        lines.append(" ".join(fields))
    (dir_path / "points3D.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
