"""Tests for the photometric, depth-prior and pseudo-view losses"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.lib.stride_tricks import sliding_window_view

from blocksplat.config import LossConfig
from blocksplat.exceptions import DimensionMismatch, EmptyDepth
from blocksplat.losses import (
    EMPTY_MASK,
    NO_VALID_PIXELS,
    PseudoViewSetup,
    WarpResult,
    depth_prior_loss,
    make_pseudo_view,
    photometric_loss,
    pseudo_view_loss,
    ssim_metric,
    ssim_value_and_grad,
    warp_pseudo_to_ref,
)
from blocksplat.sfm.types import DepthPrior, Pose

from .helpers import identity_pose, make_camera

FD_STEP = 1e-4


def _relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)


def _numeric_gradient(fn, x: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[idx] += FD_STEP
        minus[idx] -= FD_STEP
        grad[idx] = (fn(plus) - fn(minus)) / (2.0 * FD_STEP)
    return grad


def _reference_ssim(x: np.ndarray, y: np.ndarray, size: int = 11, sigma: float = 1.5) -> float:
    """Direct 2-D windowed SSIM with zero padding, one channel at a time."""
    r = np.arange(size) - size // 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    window = np.outer(g, g) / np.outer(g, g).sum()
    pad = size // 2
    c1, c2 = 0.01 ** 2, 0.03 ** 2

    def filt(img):
        padded = np.pad(img, pad, mode="constant")
        return (sliding_window_view(padded, (size, size)) * window).sum(axis=(-2, -1))

    values = []
    for ch in range(x.shape[2]):
        a, b = x[..., ch], y[..., ch]
        mu_a, mu_b = filt(a), filt(b)
        var_a = filt(a * a) - mu_a ** 2
        var_b = filt(b * b) - mu_b ** 2
        cov = filt(a * b) - mu_a * mu_b
        s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
        values.append(s)
    return float(np.mean(values))


def _offset_pair(rng: np.random.Generator, shape):
    """A random image and a target at least 0.05 away in every entry."""
    rendered = rng.uniform(0.2, 0.8, size=shape)
    offset = rng.uniform(0.05, 0.15, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    return rendered, rendered + offset


class TestPhotometricLoss:
    """Test the L1 + SSIM image loss"""

    def setup_method(self):
        self.rng = np.random.default_rng(0)

    def test_identical_images(self):
        """Test equal images give zero loss and zero gradient"""
        image = self.rng.uniform(size=(16, 16, 3))
        result = photometric_loss(image, image.copy(), LossConfig(lambda_ssim=0.2))
        assert result.value == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(result.grad, 0.0, atol=1e-15)

    def test_pure_l1(self):
        """Test rendered 0.5 against black with lambda 0 gives 0.5"""
        result = photometric_loss(np.full((8, 8, 3), 0.5), np.zeros((8, 8, 3)), LossConfig(lambda_ssim=0.0))
        assert result.value == pytest.approx(0.5)
        assert result.flag is None

    def test_matches_reference_ssim(self):
        """Test the weighted loss against an independent SSIM implementation"""
        rendered = self.rng.uniform(size=(16, 16, 3))
        gt = self.rng.uniform(size=(16, 16, 3))
        expected = 0.8 * np.abs(rendered - gt).mean() + 0.2 * (1.0 - _reference_ssim(rendered, gt))
        result = photometric_loss(rendered, gt, LossConfig(lambda_ssim=0.2))
        assert result.value == pytest.approx(expected, abs=1e-6)

    def test_gradient_matches_finite_differences(self):
        """Test the photometric gradient against central differences"""
        rendered, gt = _offset_pair(self.rng, (16, 16, 3))
        cfg = LossConfig(lambda_ssim=0.2)
        analytic = photometric_loss(rendered, gt, cfg).grad
        numeric = _numeric_gradient(lambda x: photometric_loss(x, gt, cfg).value, rendered)
        assert _relative_error(analytic, numeric).max() <= 1e-3

    def test_ssim_gradient_matches_finite_differences(self):
        """Test the SSIM gradient on a single-channel image"""
        x = self.rng.uniform(size=(12, 12))
        y = self.rng.uniform(size=(12, 12))
        _, analytic = ssim_value_and_grad(x, y)
        numeric = _numeric_gradient(lambda v: ssim_value_and_grad(v, y)[0], x)
        assert analytic.shape == x.shape
        assert _relative_error(analytic, numeric).max() <= 1e-3

    def test_shape_mismatch(self):
        """Test images of different size raise DimensionMismatch"""
        with pytest.raises(DimensionMismatch):
            photometric_loss(np.zeros((8, 8, 3)), np.zeros((8, 9, 3)))

    def test_ssim_of_identical_images(self):
        """Test SSIM of an image with itself is one"""
        image = self.rng.uniform(size=(16, 16, 3))
        assert ssim_metric(image, image) == pytest.approx(1.0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_ssim_symmetry(self, seed):
        """Test SSIM(a, b) == SSIM(b, a)"""
        rng = np.random.default_rng(seed)
        a = rng.uniform(size=(16, 16, 3))
        b = rng.uniform(size=(16, 16, 3))
        assert abs(ssim_metric(a, b) - ssim_metric(b, a)) <= 1e-9


class TestDepthPriorLoss:
    """Test the scale-aligned inverse-depth loss"""

    def setup_method(self):
        self.rng = np.random.default_rng(1)
        self.depth = self.rng.uniform(2.0, 5.0, size=(8, 8))
        self.alpha = np.ones((8, 8))

    def test_equal_depths(self):
        """Test a prior equal to the rendered depth gives zero"""
        result = depth_prior_loss(self.depth, self.depth.copy(), self.alpha)
        assert result.value == 0.0
        assert result.flag is None

    def test_constant_factor_is_absorbed(self):
        """Test a prior at twice the rendered depth gives zero after alignment"""
        result = depth_prior_loss(self.depth, 2.0 * self.depth, self.alpha)
        assert result.value == 0.0

    def test_no_valid_pixels(self):
        """Test zero accumulated alpha flags NoValidPixels"""
        result = depth_prior_loss(self.depth, self.depth, np.zeros((8, 8)))
        assert result.flag == NO_VALID_PIXELS
        assert result.value == 0.0
        assert np.all(result.grad == 0.0)

    def test_missing_prior(self):
        """Test a view without a prior is flagged"""
        result = depth_prior_loss(self.depth, DepthPrior.none(3), self.alpha)
        assert result.flag == NO_VALID_PIXELS

    def test_invalid_prior_pixels_are_ignored(self):
        """Test nan prior pixels get no gradient"""
        prior = 1.5 * self.depth
        prior[:4] = np.nan
        prior[4:, :2] *= 1.3
        result = depth_prior_loss(self.depth, prior, self.alpha)
        assert result.value > 0.0
        assert np.all(result.grad[:4] == 0.0)

    def test_alpha_mask(self):
        """Test pixels below the alpha threshold are excluded"""
        prior = self.depth.copy()
        prior[0, 0] = 100.0
        alpha = self.alpha.copy()
        alpha[0, 0] = 0.3
        result = depth_prior_loss(self.depth, prior, alpha, LossConfig(alpha_mask_threshold=0.5))
        assert result.value == 0.0
        assert result.grad[0, 0] == 0.0

    def test_scale_invariance(self):
        """Test rescaling the prior leaves the loss unchanged"""
        prior = self.depth * self.rng.uniform(0.5, 2.0, size=(8, 8))
        base = depth_prior_loss(self.depth, prior, self.alpha).value
        for c in (0.01, 0.37, 3.0, 250.0):
            assert depth_prior_loss(self.depth, c * prior, self.alpha).value == pytest.approx(base, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        """Test the gradient, median scale included, against central differences"""
        prior = np.full((8, 8), np.nan)
        pixels = self.rng.choice(64, size=16, replace=False)
        ratios = self.rng.permutation(np.linspace(0.5, 2.0, 16))
        prior.reshape(-1)[pixels] = ratios * self.depth.reshape(-1)[pixels]
        cfg = LossConfig(alpha_mask_threshold=0.0)

        analytic = depth_prior_loss(self.depth, prior, self.alpha, cfg).grad
        numeric = _numeric_gradient(lambda d: depth_prior_loss(d, prior, self.alpha, cfg).value, self.depth)
        assert _relative_error(analytic, numeric).max() <= 1e-3

    def test_shape_mismatch(self):
        """Test a prior of the wrong size raises DimensionMismatch"""
        with pytest.raises(DimensionMismatch):
            depth_prior_loss(self.depth, np.ones((4, 4)), self.alpha)


class TestMakePseudoView:
    """Test pseudo camera construction"""

    def test_translation_from_median_depth(self):
        """Test median depth 10, disparity 2, fx 5 gives [4, 0, 0]"""
        cam = make_camera(size=16, focal=5.0)
        depth = np.full((16, 16), 10.0)
        depth[:2] = 0.0
        setup = make_pseudo_view(cam, identity_pose(), depth, LossConfig(pseudo_disparity=2.0))
        assert setup.median_depth == 10.0
        assert np.allclose(setup.delta_t, [4.0, 0.0, 0.0])

    def test_unit_values(self):
        """Test unit depth, disparity and focal length give [1, 0, 0]"""
        cam = make_camera(size=8, focal=1.0)
        setup = make_pseudo_view(cam, identity_pose(), np.ones((8, 8)), LossConfig(pseudo_disparity=1.0))
        assert np.allclose(setup.delta_t, [1.0, 0.0, 0.0])

    def test_pseudo_pose(self):
        """Test the pseudo camera keeps the rotation and adds delta_t to the translation"""
        cam = make_camera(size=8, focal=4.0)
        angle = 0.3
        rotation = np.array([
            [np.cos(angle), 0.0, np.sin(angle)],
            [0.0, 1.0, 0.0],
            [-np.sin(angle), 0.0, np.cos(angle)],
        ])
        ref = Pose(rotation=rotation, translation=np.array([0.5, -1.0, 2.0]))
        setup = make_pseudo_view(cam, ref, np.full((8, 8), 3.0), LossConfig(pseudo_disparity=2.0))
        assert np.array_equal(setup.pseudo_pose.rotation, rotation)
        assert np.allclose(setup.pseudo_pose.translation, ref.translation + [1.5, 0.0, 0.0])

    def test_vanishing_disparity(self):
        """Test a vanishing disparity leaves the pseudo pose at the reference pose"""
        cam = make_camera(size=8, focal=4.0)
        setup = make_pseudo_view(cam, identity_pose(), np.full((8, 8), 3.0), LossConfig(pseudo_disparity=1e-300))
        assert np.allclose(setup.delta_t, 0.0)
        assert np.allclose(setup.pseudo_pose.translation, 0.0)

    def test_empty_depth(self):
        """Test an all-zero depth map raises EmptyDepth"""
        with pytest.raises(EmptyDepth):
            make_pseudo_view(make_camera(8, 4.0), identity_pose(), np.zeros((8, 8)))


class TestWarp:
    """Test forward warping of the pseudo view into the reference view"""

    def setup_method(self):
        self.rng = np.random.default_rng(2)
        self.cam = make_camera(size=32, focal=32.0)

    def _pseudo_setup(self, delta_x: float) -> PseudoViewSetup:
        delta = np.array([delta_x, 0.0, 0.0])
        ref = identity_pose()
        return PseudoViewSetup(
            cam=self.cam,
            ref_pose=ref,
            pseudo_pose=Pose(rotation=ref.rotation, translation=delta),
            delta_t=delta,
            median_depth=1.0,
        )

    def test_identity_warp(self):
        """Test a zero offset copies every valid pixel in place"""
        color = self.rng.uniform(size=(32, 32, 3))
        depth = self.rng.uniform(1.0, 9.0, size=(32, 32))
        depth[self.rng.uniform(size=(32, 32)) < 0.2] = 0.0
        warp = warp_pseudo_to_ref(color, depth, self._pseudo_setup(0.0))
        assert np.array_equal(warp.valid_mask, depth > 0)
        assert np.array_equal(warp.warped_image[warp.valid_mask], color[warp.valid_mask])

    def test_plane_shift(self):
        """Test a fronto-parallel plane shifts by fx * dt / z within half a pixel"""
        for _ in range(20):
            z = float(self.rng.uniform(1.0, 20.0))
            disparity = float(self.rng.uniform(0.3, 6.0))
            depth = np.full((32, 32), z)
            setup = make_pseudo_view(self.cam, identity_pose(), depth, LossConfig(pseudo_disparity=disparity))
            shift = self.cam.fx * setup.delta_t[0] / z
            warp = warp_pseudo_to_ref(self.rng.uniform(size=(32, 32, 3)), depth, setup)

            rows, cols = np.nonzero(warp.valid_mask)
            src = warp.correspondence[rows, cols]
            src_rows, src_cols = np.divmod(src, 32)
            assert len(rows) > 0
            assert np.array_equal(src_rows, rows)
            assert np.all(np.abs(cols - (src_cols - shift)) <= 0.5 + 1e-9)

    def test_plane_shift_coverage(self):
        """Test a 2.3 pixel shift leaves only the last two columns empty"""
        z = 4.0
        depth = np.full((32, 32), z)
        setup = make_pseudo_view(self.cam, identity_pose(), depth, LossConfig(pseudo_disparity=2.3))
        warp = warp_pseudo_to_ref(self.rng.uniform(size=(32, 32, 3)), depth, setup)
        assert np.all(warp.valid_mask[:, :30])
        assert not np.any(warp.valid_mask[:, 30:])

    def test_nearest_surface_wins(self):
        """Test two pixels landing on one target keep the one at depth 3"""
        color = np.zeros((32, 32, 3))
        depth = np.zeros((32, 32))
        color[10, 20] = [1.0, 0.0, 0.0]
        depth[10, 20] = 3.0
        color[10, 18] = [0.0, 1.0, 0.0]
        depth[10, 18] = 5.0
        warp = warp_pseudo_to_ref(color, depth, self._pseudo_setup(0.46875))
        assert warp.valid_mask.sum() == 1
        assert np.array_equal(warp.warped_image[10, 15], [1.0, 0.0, 0.0])
        assert warp.correspondence[10, 15] == 10 * 32 + 20

    def test_alpha_gate(self):
        """Test low-alpha pseudo pixels are not warped"""
        color = self.rng.uniform(size=(32, 32, 3))
        depth = np.full((32, 32), 2.0)
        alpha = np.ones((32, 32))
        alpha[:, :16] = 0.1
        warp = warp_pseudo_to_ref(color, depth, self._pseudo_setup(0.0), pse_alpha=alpha, alpha_threshold=0.5)
        assert not warp.valid_mask[:, :16].any()
        assert warp.valid_mask[:, 16:].all()


class TestPseudoViewLoss:
    """Test the masked pseudo-view L1"""

    def setup_method(self):
        self.rng = np.random.default_rng(3)
        self.cam = make_camera(size=16, focal=16.0)

    def _full_warp(self, value: float) -> WarpResult:
        return WarpResult(
            warped_image=np.full((16, 16, 3), value),
            valid_mask=np.ones((16, 16), dtype=bool),
            correspondence=np.arange(256).reshape(16, 16),
            coords=np.zeros((16, 16, 2)),
        )

    def test_constant_images(self):
        """Test gt 0.3 against warped 0.7 on a full mask gives 0.4"""
        result = pseudo_view_loss(np.full((16, 16, 3), 0.3), self._full_warp(0.7))
        assert result.value == pytest.approx(0.4)
        assert np.allclose(result.grad, 1.0 / (16 * 16 * 3))

    def test_empty_mask(self):
        """Test an empty mask gives zero with the EmptyMask flag"""
        warp = self._full_warp(0.7)
        warp.valid_mask[:] = False
        result = pseudo_view_loss(np.full((16, 16, 3), 0.3), warp)
        assert result.flag == EMPTY_MASK
        assert result.value == 0.0
        assert np.all(result.grad == 0.0)

    def test_self_warp_is_zero(self):
        """Test warping a rendering onto itself against itself gives zero"""
        color = self.rng.uniform(size=(16, 16, 3))
        depth = self.rng.uniform(1.0, 4.0, size=(16, 16))
        setup = make_pseudo_view(self.cam, identity_pose(), depth, LossConfig(pseudo_disparity=1e-300))
        warp = warp_pseudo_to_ref(color, depth, setup)
        assert pseudo_view_loss(color, warp).value == 0.0

    def test_gradient_routed_to_sources(self):
        """Test the gradient on pseudo colors against central differences"""
        depth = np.full((16, 16), 3.0)
        setup = make_pseudo_view(self.cam, identity_pose(), depth, LossConfig(pseudo_disparity=2.3))
        color = self.rng.uniform(0.2, 0.4, size=(16, 16, 3))
        gt = self.rng.uniform(0.6, 0.8, size=(16, 16, 3))

        def loss(c):
            return pseudo_view_loss(gt, warp_pseudo_to_ref(c, depth, setup)).value

        analytic = pseudo_view_loss(gt, warp_pseudo_to_ref(color, depth, setup)).grad
        numeric = _numeric_gradient(loss, color)
        assert _relative_error(analytic, numeric).max() <= 1e-3
        # source columns 0 and 1 land left of the reference image
        assert np.all(analytic[:, :2] == 0.0)
