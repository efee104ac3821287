import os
import sys

import numpy as np
import pytest
from PIL import Image

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from elgrid.models.errors import ImageFormatError, InvalidInputError
from elgrid.models.image import GrayImage, Signal1D
from elgrid.models.scene import SceneSpec
from elgrid.core.scene_generator import render
from elgrid.storage.image_io import from_raw, load_image, save_image
from elgrid.utils.math_utils import SignalProcessor


class TestGrayImage:

    def test_01_storage_convention(self):
        # data[y, x]: 3 columns (w) and 2 rows (h)
        img = GrayImage.from_array(np.zeros((2, 3)))
        assert img.width == 3
        assert img.height == 2

    def test_02_rejects_invalid_arrays(self):
        with pytest.raises(ImageFormatError):
            GrayImage.from_array(np.zeros((1, 5)))
        with pytest.raises(ImageFormatError):
            GrayImage.from_array(np.full((3, 3), 1.5))
        with pytest.raises(ImageFormatError):
            GrayImage.from_array(np.array([[0.0, np.nan], [0.0, 0.0]]))
        with pytest.raises(ImageFormatError):
            GrayImage.from_array(np.zeros((2, 2, 3)))

    def test_03_data_is_read_only(self):
        img = GrayImage.from_array(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            img.data[0, 0] = 1.0

    def test_04_signal_length_must_match_source(self):
        with pytest.raises(InvalidInputError):
            Signal1D(np.zeros(5), "x", (4, 3))
        sig = Signal1D(np.zeros(3), "y", (4, 3))
        assert len(sig) == 3


class TestLoadImage:

    def test_01_eight_bit_endpoints(self, tmp_path):
        path = str(tmp_path / "tiny.png")
        Image.fromarray(np.array([[0, 255], [255, 0]], dtype=np.uint8)).save(path)
        img = load_image(path)
        np.testing.assert_array_equal(img.data, [[0.0, 1.0], [1.0, 0.0]])

    def test_02_sixteen_bit_rescale(self, tmp_path):
        path = str(tmp_path / "deep.png")
        Image.fromarray(np.full((3, 3), 32768, dtype=np.uint16)).save(path)
        img = load_image(path)
        assert img.data[1, 1] == pytest.approx(32768 / 65535, abs=1e-12)

    def test_03_rgb_to_luma(self, tmp_path):
        path = str(tmp_path / "color.png")
        rgb = np.zeros((2, 2, 3), dtype=np.uint8)
        rgb[..., 1] = 255
        Image.fromarray(rgb).save(path)
        img = load_image(path)
        assert img.data[0, 0] == pytest.approx(0.587, abs=1e-9)

    def test_04_zero_area(self):
        with pytest.raises(ImageFormatError):
            from_raw(np.zeros((0, 5), dtype=np.uint8))

    def test_05_unreadable_and_unsupported(self, tmp_path):
        with pytest.raises(ImageFormatError):
            load_image(str(tmp_path / "missing.png"))

        junk = tmp_path / "junk.png"
        junk.write_bytes(b"not an image at all")
        with pytest.raises(ImageFormatError):
            load_image(str(junk))

        float_tiff = str(tmp_path / "float.tif")
        Image.fromarray(np.full((4, 4), 0.5, dtype=np.float32)).save(float_tiff)
        with pytest.raises(ImageFormatError):
            load_image(float_tiff)

    def test_06_sixteen_bit_save_and_reload(self, tmp_path):
        path = str(tmp_path / "saved.png")
        img = GrayImage.from_array(np.linspace(0, 1, 20).reshape(4, 5))
        save_image(img, path)
        np.testing.assert_allclose(load_image(path).data, img.data, atol=1.0 / 65535)


class TestAccumulation:

    @classmethod
    def setup_class(cls):
        spec = SceneSpec(cols=3, rows=2, width=64, height=48, busbar_count=1)
        cls.scene, _ = render(spec, seed=3)

    def test_01_constant_image(self):
        img = GrayImage.from_array(np.ones((2, 3)))
        np.testing.assert_allclose(SignalProcessor.row_sum(img).values, [3.0, 3.0])
        np.testing.assert_allclose(SignalProcessor.col_sum(img).values, [2.0, 2.0, 2.0])

    def test_02_hand_sum(self):
        img = GrayImage.from_array(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(SignalProcessor.row_sum(img).values, [1.0, 1.0])
        np.testing.assert_allclose(SignalProcessor.col_sum(img).values, [1.0, 1.0])

    def test_03_matches_double_loop(self):
        data = self.scene.data
        rows = [sum(data[y, x] for x in range(self.scene.width)) for y in range(self.scene.height)]
        cols = [sum(data[y, x] for y in range(self.scene.height)) for x in range(self.scene.width)]
        np.testing.assert_allclose(SignalProcessor.row_sum(self.scene).values, rows, rtol=1e-12)
        np.testing.assert_allclose(SignalProcessor.col_sum(self.scene).values, cols, rtol=1e-12)

    def test_04_axes_and_totals(self):
        rs, cs = SignalProcessor.row_sum(self.scene), SignalProcessor.col_sum(self.scene)
        assert rs.axis == "y" and len(rs) == self.scene.height
        assert cs.axis == "x" and len(cs) == self.scene.width
        total = self.scene.data.sum()
        assert rs.values.sum() == pytest.approx(total, rel=1e-9)
        assert cs.values.sum() == pytest.approx(total, rel=1e-9)

    def test_05_linearity(self):
        rng = np.random.default_rng(1)
        a, b = rng.uniform(0, 0.5, (6, 9)), rng.uniform(0, 0.5, (6, 9))
        mix = GrayImage.from_array(0.7 * a + 0.3 * b)
        expected = 0.7 * a.sum(axis=1) + 0.3 * b.sum(axis=1)
        np.testing.assert_allclose(SignalProcessor.row_sum(mix).values, expected, atol=1e-12)


class TestSmoothedGradient:

    def test_01_constant_signal(self):
        grad = SignalProcessor.smoothed_gradient(Signal1D.from_values([5, 5, 5, 5, 5]), 1.0)
        np.testing.assert_allclose(grad.values, 0.0, atol=1e-9)
        assert grad.sigma == 1.0

    def test_02_linear_ramp(self):
        grad = SignalProcessor.smoothed_gradient(Signal1D.from_values(np.arange(20.0)), 1.0)
        np.testing.assert_allclose(grad.values[4:-4], 1.0, atol=1e-2)

    def test_03_step_location(self):
        step = np.zeros(100)
        step[50:] = 1.0
        grad = SignalProcessor.smoothed_gradient(Signal1D.from_values(step), 2.0)
        assert abs(int(np.argmax(grad.values)) - 50) <= 1

    def test_04_reversal_anticommutes(self):
        rng = np.random.default_rng(7)
        sig = Signal1D.from_values(rng.normal(size=100))
        forward = SignalProcessor.smoothed_gradient(sig, 2.0).values
        backward = SignalProcessor.smoothed_gradient(sig.reversed(), 2.0).values
        r = SignalProcessor.kernel_radius(2.0)
        np.testing.assert_allclose(backward[r:-r], -forward[::-1][r:-r], atol=1e-9)

    def test_05_invalid_parameters(self):
        with pytest.raises(InvalidInputError):
            SignalProcessor.smoothed_gradient(Signal1D.from_values([1.0, 2.0, 3.0]), 0.0)
        with pytest.raises(InvalidInputError):
            SignalProcessor.smoothed_gradient(Signal1D.from_values([1.0, 2.0]), 1.0)


class TestBilinearSample:

    def test_01_pixel_center_identity(self):
        img = GrayImage.from_array(np.array([[0.1, 0.2], [0.3, 0.4]]))
        assert SignalProcessor.bilinear_sample(img, 1.0, 0.0) == pytest.approx(0.2)
        assert SignalProcessor.bilinear_sample(img, 0.0, 1.0) == pytest.approx(0.3)

    def test_02_midpoint(self):
        img = GrayImage.from_array(np.array([[0.0, 1.0], [0.0, 1.0]]))
        assert SignalProcessor.bilinear_sample(img, 0.5, 0.0) == pytest.approx(0.5)

    def test_03_matches_reference_formula(self):
        rng = np.random.default_rng(11)
        data = rng.uniform(0, 1, (12, 15))
        img = GrayImage.from_array(data)
        u, v = rng.uniform(0, 14, 100), rng.uniform(0, 11, 100)
        got = SignalProcessor.sample_points(img, u, v)

        x0, y0 = np.floor(u).astype(int), np.floor(v).astype(int)
        x1, y1 = np.minimum(x0 + 1, 14), np.minimum(y0 + 1, 11)
        fx, fy = u - x0, v - y0
        ref = (
            data[y0, x0] * (1 - fx) * (1 - fy)
            + data[y0, x1] * fx * (1 - fy)
            + data[y1, x0] * (1 - fx) * fy
            + data[y1, x1] * fx * fy
        )
        np.testing.assert_allclose(got, ref, atol=1e-12)

    def test_04_exact_on_affine_images(self):
        ys, xs = np.mgrid[0:10, 0:10]
        img = GrayImage.from_array(0.1 + 0.03 * xs + 0.05 * ys)
        rng = np.random.default_rng(5)
        u, v = rng.uniform(0, 9, 50), rng.uniform(0, 9, 50)
        np.testing.assert_allclose(SignalProcessor.sample_points(img, u, v), 0.1 + 0.03 * u + 0.05 * v, atol=1e-9)

    def test_05_clamps_outside(self):
        img = GrayImage.from_array(np.array([[0.2, 0.4], [0.6, 0.8]]))
        assert SignalProcessor.bilinear_sample(img, -5.0, -5.0) == pytest.approx(0.2)
        assert SignalProcessor.bilinear_sample(img, 9.0, 9.0) == pytest.approx(0.8)
