"""Tests for sparse model ingestion, images and depth priors"""

import numpy as np
import pytest
from PIL import Image

from blocksplat.exceptions import (
    DimensionMismatch,
    MalformedRecord,
    MissingFile,
    UnreadableFile,
    UnsupportedCameraModel,
    VisibilityAsymmetry,
)
from blocksplat.sfm.colmap import parse_sparse_model, qvec2rotmat, rotmat2qvec, write_sparse_model
from blocksplat.sfm.images import (
    find_depth_file,
    load_depth_prior,
    load_image,
    read_pfm,
    save_image,
    write_depth_png,
    write_pfm,
)
from blocksplat.sfm.types import CameraIntrinsics, DepthPrior, ViewRecord

from .helpers import make_camera, make_model


CAMERAS_TXT = "1 PINHOLE 32 24 30.0 31.0 16.0 12.0\n"

IMAGES_TXT = """# two views
1 1.0 0.0 0.0 0.0 0.0 0.0 0.0 1 a.png
10.0 12.0 1 20.0 5.0 2 3.0 3.0 3
2 1.0 0.0 0.0 0.0 -1.0 0.0 0.0 1 b.png
11.0 12.0 1 21.0 5.0 2 4.0 3.0 3
"""

POINTS_TXT = """1 0.0 0.0 4.0 255 0 0 0.5 1 0 2 0
2 1.0 -0.5 5.0 0 255 0 0.5 1 1 2 1
3 -1.0 -1.0 6.0 0 0 255 0.5 1 2 2 2
"""


def _write_text_model(path, cameras=CAMERAS_TXT, images=IMAGES_TXT, points=POINTS_TXT):
    path.mkdir(parents=True, exist_ok=True)
    (path / "cameras.txt").write_text(cameras)
    (path / "images.txt").write_text(images)
    (path / "points3D.txt").write_text(points)
    return path


class TestParseSparseModel:
    """Test COLMAP text and binary parsing"""

    def test_minimal_text_model(self, tmp_path):
        """Test 1 camera, 2 views and 3 points seen by both"""
        model = parse_sparse_model(_write_text_model(tmp_path / "sparse"), "text")

        assert len(model.cameras) == 1
        assert len(model.views) == 2
        assert len(model.points) == 3
        for view in model.views.values():
            assert view.visible_point_ids == {1, 2, 3}
        for point in model.points.values():
            assert point.observing_view_ids == {1, 2}
        assert model.cameras[1].fx == 30.0
        assert model.cameras[1].cy == 12.0
        assert np.allclose(model.points[1].color, [1.0, 0.0, 0.0])

    def test_auto_detects_text(self, tmp_path):
        """Test format detection picks the complete text set"""
        model = parse_sparse_model(_write_text_model(tmp_path / "sparse"))
        assert len(model.points) == 3

    def test_unknown_view_in_track(self, tmp_path):
        """Test a track naming an absent view raises VisibilityAsymmetry"""
        points = POINTS_TXT.replace("1 2 2 2", "1 2 7 0")
        path = _write_text_model(tmp_path / "sparse", points=points)

        with pytest.raises(VisibilityAsymmetry):
            parse_sparse_model(path, "text")

    def test_one_sided_observation(self, tmp_path):
        """Test a view listing a point whose track omits it"""
        points = POINTS_TXT.replace("3 -1.0 -1.0 6.0 0 0 255 0.5 1 2 2 2", "3 -1.0 -1.0 6.0 0 0 255 0.5 1 2")
        path = _write_text_model(tmp_path / "sparse", points=points)

        with pytest.raises(VisibilityAsymmetry):
            parse_sparse_model(path, "text")

    def test_unsupported_camera_model(self, tmp_path):
        """Test distorted camera models are rejected"""
        cameras = "1 OPENCV 32 24 30.0 31.0 16.0 12.0 0.1 0.0 0.0 0.0\n"
        path = _write_text_model(tmp_path / "sparse", cameras=cameras)

        with pytest.raises(UnsupportedCameraModel) as exc:
            parse_sparse_model(path, "text")
        assert exc.value.name == "OPENCV"

    def test_simple_pinhole(self, tmp_path):
        """Test SIMPLE_PINHOLE uses one focal length for both axes"""
        path = _write_text_model(tmp_path / "sparse", cameras="1 SIMPLE_PINHOLE 32 24 28.0 16.0 12.0\n")
        cam = parse_sparse_model(path, "text").cameras[1]
        assert cam.fx == cam.fy == 28.0

    def test_malformed_line_reports_offset(self, tmp_path):
        """Test a bad number reports its line"""
        points = POINTS_TXT.replace("2 1.0 -0.5", "2 1.0 oops")
        path = _write_text_model(tmp_path / "sparse", points=points)

        with pytest.raises(MalformedRecord) as exc:
            parse_sparse_model(path, "text")
        assert exc.value.offset == 2

    def test_missing_file(self, tmp_path):
        """Test a missing points file raises MissingFile"""
        path = _write_text_model(tmp_path / "sparse")
        (path / "points3D.txt").unlink()

        with pytest.raises(MissingFile):
            parse_sparse_model(path, "text")

    def test_truncated_binary(self, tmp_path):
        """Test a cut binary file raises MalformedRecord"""
        model = parse_sparse_model(_write_text_model(tmp_path / "text"), "text")
        out = tmp_path / "bin"
        write_sparse_model(model, out, "binary")
        data = (out / "points3D.bin").read_bytes()
        (out / "points3D.bin").write_bytes(data[:-5])

        with pytest.raises(MalformedRecord):
            parse_sparse_model(out, "binary")

    def test_text_and_binary_agree(self, tmp_path):
        """Test both exports of one model parse to the same model"""
        rng = np.random.default_rng(3)
        positions = rng.uniform(-1.0, 1.0, size=(20, 3)) + [0.0, 0.0, 5.0]
        visibility = {1: range(1, 21), 2: range(1, 15), 3: range(8, 21)}
        source = make_model(positions, visibility, colors=rng.uniform(0, 1, size=(20, 3)))

        write_sparse_model(source, tmp_path / "text", "text")
        write_sparse_model(source, tmp_path / "bin", "binary")
        from_text = parse_sparse_model(tmp_path / "text", "text")
        from_bin = parse_sparse_model(tmp_path / "bin", "binary")

        assert from_text.is_close(from_bin)
        assert set(from_bin.points) == set(source.points)
        for pid, point in source.points.items():
            assert np.allclose(from_bin.points[pid].position, point.position, atol=1e-9)
            assert from_bin.points[pid].observing_view_ids == point.observing_view_ids

    def test_round_trip_preserves_model(self, tmp_path):
        """Test parse(write(model)) keeps ids, sets and floats"""
        rng = np.random.default_rng(5)
        positions = rng.uniform(-1.0, 1.0, size=(12, 3)) + [0.0, 0.0, 4.0]
        rgb8 = rng.integers(0, 256, size=(12, 3)) / 255.0
        source = make_model(positions, {4: range(1, 13), 9: [2, 4, 6, 8]}, colors=rgb8)

        write_sparse_model(source, tmp_path / "sparse", "binary")
        parsed = parse_sparse_model(tmp_path / "sparse")

        assert parsed.is_close(source, atol=1e-6)

    def test_record_order_does_not_matter(self, tmp_path):
        """Test shuffled records give the same model"""
        lines = POINTS_TXT.strip().splitlines()
        shuffled = "\n".join(reversed(lines)) + "\n"
        a = parse_sparse_model(_write_text_model(tmp_path / "a"), "text")
        b = parse_sparse_model(_write_text_model(tmp_path / "b", points=shuffled), "text")

        assert a.is_close(b, atol=0.0)
        assert list(a.points) == list(b.points)


class TestQuaternions:
    """Test quaternion conversions"""

    def test_identity(self):
        """Test the unit quaternion gives the identity"""
        assert np.allclose(qvec2rotmat([1.0, 0.0, 0.0, 0.0]), np.eye(3))

    def test_matrix_round_trip(self):
        """Test rotmat2qvec inverts qvec2rotmat"""
        rng = np.random.default_rng(0)
        for _ in range(10):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            R = qvec2rotmat(q)
            assert np.allclose(qvec2rotmat(rotmat2qvec(R)), R, atol=1e-12)


class TestCameraIntrinsics:
    """Test intrinsics validation and scaling"""

    def test_scaled(self):
        """Test downsampling divides focal lengths and principal point"""
        cam = CameraIntrinsics(width=64, height=48, fx=60.0, fy=62.0, cx=32.0, cy=24.0)
        half = cam.scaled(2)
        assert (half.width, half.height) == (32, 24)
        assert (half.fx, half.fy, half.cx, half.cy) == (30.0, 31.0, 16.0, 12.0)

    def test_rejects_bad_focal(self):
        """Test non-positive focal length is refused"""
        with pytest.raises(ValueError):
            CameraIntrinsics(width=10, height=10, fx=0.0, fy=1.0, cx=5.0, cy=5.0)

    def test_view_requires_rotation(self):
        """Test a non-orthonormal rotation is refused"""
        with pytest.raises(ValueError):
            ViewRecord(view_id=1, intrinsics_id=1, rotation=2 * np.eye(3), translation=np.zeros(3), image_path="x.png")


class TestImages:
    """Test image loading"""

    def test_load_is_linear(self, tmp_path):
        """Test 8-bit values are divided by 255 without gamma"""
        data = np.zeros((4, 6, 3), dtype=np.uint8)
        data[..., 0] = 51
        data[..., 2] = 255
        Image.fromarray(data).save(tmp_path / "img.png")

        image = load_image(tmp_path / "img.png")
        assert image.shape == (4, 6, 3)
        assert np.allclose(image[..., 0], 0.2)
        assert np.allclose(image[..., 2], 1.0)

    def test_downsample_averages(self, tmp_path):
        """Test box downsampling of a checkerboard"""
        data = np.zeros((4, 4, 3), dtype=np.uint8)
        data[::2, ::2] = 255
        data[1::2, 1::2] = 255
        Image.fromarray(data).save(tmp_path / "img.png")

        image = load_image(tmp_path / "img.png", downsample=2)
        assert image.shape == (2, 2, 3)
        assert np.allclose(image, 0.5)

    def test_save_then_load(self, tmp_path):
        """Test saving quantizes to 8 bits"""
        image = np.full((3, 3, 3), 0.5)
        save_image(tmp_path / "out" / "img.png", image)
        assert np.allclose(load_image(tmp_path / "out" / "img.png"), 128 / 255)

    def test_missing_image(self, tmp_path):
        """Test a missing image raises MissingFile"""
        with pytest.raises(MissingFile):
            load_image(tmp_path / "nope.png")

    def test_unreadable_image(self, tmp_path):
        """Test a corrupt image raises UnreadableFile"""
        (tmp_path / "bad.png").write_bytes(b"not an image")
        with pytest.raises(UnreadableFile):
            load_image(tmp_path / "bad.png")


class TestDepthPrior:
    """Test depth prior loading"""

    def setup_method(self):
        """Setup a 6x4 camera and a view"""
        self.cam = CameraIntrinsics(width=6, height=4, fx=5.0, fy=5.0, cx=3.0, cy=2.0, camera_id=1)
        self.view = ViewRecord(
            view_id=7, intrinsics_id=1, rotation=np.eye(3), translation=np.zeros(3), image_path="img_007.png"
        )

    def test_constant_pfm(self, tmp_path):
        """Test a constant PFM loads unchanged"""
        write_pfm(tmp_path / "d.pfm", np.full((4, 6), 5.0))
        prior = load_depth_prior(tmp_path / "d.pfm", self.view, self.cam)

        assert prior.view_id == 7
        assert prior.source == "file"
        assert np.all(prior.depth == 5.0)
        assert prior.valid.all()

    def test_zero_sample_is_invalid(self, tmp_path):
        """Test a 0.0 sample becomes invalid and the rest loads"""
        depth = np.full((4, 6), 3.0)
        depth[1, 2] = 0.0
        write_pfm(tmp_path / "d.pfm", depth)
        prior = load_depth_prior(tmp_path / "d.pfm", self.view, self.cam)

        assert np.isnan(prior.depth[1, 2])
        assert not prior.valid[1, 2]
        assert prior.valid.sum() == 23

    def test_pfm_row_order(self, tmp_path):
        """Test the top row stays on top"""
        depth = np.arange(24, dtype=np.float64).reshape(4, 6) + 1.0
        write_pfm(tmp_path / "d.pfm", depth)
        assert np.array_equal(read_pfm(tmp_path / "d.pfm"), depth)

    def test_png_with_scale(self, tmp_path):
        """Test a 16-bit value of 1000 with scale 0.01 gives 10.0"""
        write_depth_png(tmp_path / "d.png", np.full((4, 6), 10.0), scale=0.01)
        prior = load_depth_prior(tmp_path / "d.png", self.view, self.cam)
        assert np.allclose(prior.depth, 10.0)

    def test_png_without_sidecar(self, tmp_path):
        """Test a PNG without its scale file is unreadable"""
        write_depth_png(tmp_path / "d.png", np.full((4, 6), 10.0), scale=0.01)
        (tmp_path / "d.json").unlink()
        with pytest.raises(UnreadableFile):
            load_depth_prior(tmp_path / "d.png", self.view, self.cam)

    def test_dimension_mismatch(self, tmp_path):
        """Test a prior of the wrong size is refused"""
        write_pfm(tmp_path / "d.pfm", np.ones((5, 6)))
        with pytest.raises(DimensionMismatch):
            load_depth_prior(tmp_path / "d.pfm", self.view, self.cam)

    def test_full_resolution_prior_is_downsampled(self, tmp_path):
        """Test a prior at twice the working size is averaged down"""
        write_pfm(tmp_path / "d.pfm", np.full((8, 12), 2.0))
        prior = load_depth_prior(tmp_path / "d.pfm", self.view, self.cam, downsample=2)
        assert prior.depth.shape == (4, 6)
        assert np.allclose(prior.depth, 2.0)

    def test_bad_pfm_header(self, tmp_path):
        """Test a colour PFM is refused"""
        (tmp_path / "d.pfm").write_bytes(b"PF\n6 4\n-1.0\n" + b"\x00" * 288)
        with pytest.raises(UnreadableFile):
            load_depth_prior(tmp_path / "d.pfm", self.view, self.cam)

    def test_find_depth_file(self, tmp_path):
        """Test priors are found by image stem"""
        write_pfm(tmp_path / "img_007.pfm", np.ones((4, 6)))
        assert find_depth_file(tmp_path, "img_007.png") == tmp_path / "img_007.pfm"
        assert find_depth_file(tmp_path, "other.png") is None
        assert find_depth_file(None, "img_007.png") is None

    def test_none_prior(self):
        """Test the empty prior carries no data"""
        prior = DepthPrior.none(3)
        assert prior.depth is None
        assert prior.source == "none"
        assert prior.valid.size == 0


def test_make_model_is_symmetric():
    """Test the helper builds symmetric visibility"""
    model = make_model(np.zeros((3, 3)) + [0, 0, 5], {1: [1, 2], 2: [2, 3]}, cam=make_camera())
    assert model.points[2].observing_view_ids == {1, 2}
    assert model.views[2].visible_point_ids == {2, 3}
