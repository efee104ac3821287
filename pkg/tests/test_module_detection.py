import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from elgrid.core.evaluation import polygon_iou
from elgrid.core.module_detector import (
    ModuleDetector,
    bounding_boxes,
    detect_module,
    disambiguate_corners,
    find_extrema,
    peak_span,
    select_module,
    strongest_pair,
)
from elgrid.core.scene_generator import render
from elgrid.models.errors import AmbiguousOrientation, DegenerateBox, NoModuleFound
from elgrid.models.image import GrayImage, Signal1D
from elgrid.models.results import BoundingBoxPair, Extremum
from elgrid.models.scene import SceneSpec
from elgrid.utils.math_utils import SignalProcessor
from tests.data_generator import generate_scene


def _ex(index, kind, value):
    return Extremum(index, kind, value, (float(index), float(index)))


def _corner_error(found, truth):
    """每個偵測角點到最近真值角點的距離 (px)，取最大者。"""
    d = np.linalg.norm(found[:, None, :] - truth[None, :, :], axis=2)
    return float(d.min(axis=1).max())


def _diagonal(corners):
    return float(np.linalg.norm(corners[2] - corners[0]))


class TestFindExtrema:

    def test_01_all_zero_signal(self):
        grad = Signal1D.from_values(np.zeros(50), sigma=1.0)
        assert find_extrema(grad, 2.0) == []

    def test_02_single_plateau(self):
        step = np.zeros(200)
        step[60:140] = 1.0
        grad = SignalProcessor.smoothed_gradient(Signal1D.from_values(step), 2.0)
        found = find_extrema(grad, 2.0)

        assert [e.kind for e in found] == ["maximum", "minimum"]
        assert abs(found[0].index - 60) <= 1
        assert abs(found[1].index - 140) <= 1

    def test_03_two_modules_side_by_side(self):
        spec = SceneSpec(width=1400, height=500, fill=0.4, shift=(-200.0, 0.0), neighbor_offsets=[(12.0, 0.0)])
        img, _ = render(spec, seed=2)
        sigma = 0.01 * max(img.width, img.height)
        grad = SignalProcessor.smoothed_gradient(SignalProcessor.col_sum(img), sigma)

        found = find_extrema(grad, 2.0)
        assert [e.kind for e in found] == ["maximum", "minimum", "maximum", "minimum"]

    def test_04_one_extremum_per_region(self):
        img, _, _ = generate_scene("frontal", seed=4, noise_sigma=0.02)
        grad = SignalProcessor.smoothed_gradient(SignalProcessor.col_sum(img), 10.0)
        g = grad.values
        thr = 2.0 * np.std(g)
        found = find_extrema(grad, 2.0)

        # 同類的相鄰極值之間必有一個樣本回落到門檻內
        for a, b in zip(found, found[1:]):
            if a.kind != b.kind:
                continue
            between = g[a.index:b.index + 1]
            if a.kind == "maximum":
                assert np.any(between <= thr)
            else:
                assert np.any(between >= -thr)

    def test_05_spans_bracket_their_index(self):
        img, _, _ = generate_scene("rotated", seed=1)
        grad = SignalProcessor.smoothed_gradient(SignalProcessor.row_sum(img), 10.0)
        for e in find_extrema(grad, 2.0):
            assert e.span[0] <= e.index <= e.span[1]


class TestPeakSpan:

    def test_01_triangle(self):
        i = np.arange(100)
        tri = np.maximum(0.0, 1.0 - np.abs(i - 50) / 10.0)
        left, right = peak_span(Signal1D.from_values(tri, sigma=1.0), 50)
        assert abs(left - 41) <= 1
        assert abs(right - 59) <= 1

    def test_02_clamps_to_signal_start(self):
        g = np.array([1.0, 0.8, 0.5, 0.05, 0.0, 0.0])
        left, right = peak_span(Signal1D.from_values(g, sigma=1.0), 0)
        assert left == 0
        assert right == 2

    def test_03_stops_at_sign_change(self):
        g = np.array([0.0, -0.5, 0.6, 1.0, 0.7, -0.2, 0.0])
        assert peak_span(Signal1D.from_values(g, sigma=1.0), 3) == (2, 4)

    def test_04_span_widens_with_tilt(self):
        widths = []
        for tilt in (0.0, 20.0, 40.0):
            img, _, _ = generate_scene("tilt", tilt_deg=tilt)
            sigma = 0.01 * max(img.width, img.height)
            grad = SignalProcessor.smoothed_gradient(SignalProcessor.row_sum(img), sigma)
            top, _ = select_module(find_extrema(grad, 2.0))
            widths.append(top.span[1] - top.span[0])

        assert widths[0] <= widths[1] <= widths[2]
        assert widths[2] > widths[0]


class TestSelectModule:

    def test_01_largest_gap_wins(self):
        extrema = [
            _ex(10, "maximum", 3.0),
            _ex(30, "minimum", -3.0),
            _ex(50, "maximum", 3.0),
            _ex(200, "minimum", -3.0),
        ]
        rise, fall = select_module(extrema)
        assert (rise.index, fall.index) == (50, 200)

    def test_02_collapses_same_kind_runs(self):
        extrema = [
            _ex(10, "maximum", 1.0),
            _ex(20, "maximum", 5.0),
            _ex(100, "minimum", -2.0),
            _ex(110, "minimum", -4.0),
        ]
        rise, fall = select_module(extrema)
        assert (rise.index, fall.index) == (20, 110)

    def test_03_no_pair(self):
        with pytest.raises(NoModuleFound):
            select_module([])
        with pytest.raises(NoModuleFound):
            select_module([_ex(10, "minimum", -1.0), _ex(90, "maximum", 1.0)])


class TestStrongestPair:

    @staticmethod
    def _plateaus():
        # 旋轉模組的梯度：上升與下降各是一段寬平台
        g = np.zeros(1000)
        g[100:300] = 1.0
        g[600:800] = -1.0
        return Signal1D.from_values(g, sigma=10.0)

    def test_01_plateaus_stay_below_threshold(self):
        grad = self._plateaus()
        assert find_extrema(grad, 2.0) == []
        rise, fall = strongest_pair(grad, 1.0)
        assert (rise.index, rise.kind, rise.span) == (100, "maximum", (100.0, 299.0))
        assert (fall.index, fall.kind, fall.span) == (600, "minimum", (600.0, 799.0))

    def test_02_weak_or_flat_edges(self):
        with pytest.raises(NoModuleFound):
            strongest_pair(self._plateaus(), 2.0)
        with pytest.raises(NoModuleFound):
            strongest_pair(Signal1D.from_values(np.zeros(50), sigma=1.0), 1.0)

    def test_03_falling_edge_must_follow(self):
        g = np.zeros(200)
        g[20:40] = -1.0
        g[150:170] = 1.0
        with pytest.raises(NoModuleFound):
            strongest_pair(Signal1D.from_values(g, sigma=2.0), 1.0)


class TestBoundingBoxes:

    def test_01_collapsed_spans_coincide(self):
        ex_x = (_ex(100, "maximum", 1.0), _ex(900, "minimum", -1.0))
        ex_y = (_ex(50, "maximum", 1.0), _ex(500, "minimum", -1.0))
        boxes = bounding_boxes(ex_x, ex_y)
        assert boxes.x_outer == boxes.x_inner == (100.0, 900.0)
        assert boxes.y_outer == boxes.y_inner == (50.0, 500.0)

    def test_02_crossed_spans(self):
        ex_x = (
            Extremum(100, "maximum", 1.0, (80.0, 520.0)),
            Extremum(500, "minimum", -1.0, (480.0, 520.0)),
        )
        ex_y = (_ex(50, "maximum", 1.0), _ex(500, "minimum", -1.0))
        with pytest.raises(DegenerateBox):
            bounding_boxes(ex_x, ex_y)

    def test_03_rotated_module_nests_boxes(self):
        img, _, _ = generate_scene("rotated", roll_deg=30.0)
        found = ModuleDetector().detect(img)
        b = found.boxes
        assert b.x_outer[0] < b.x_inner[0] < b.x_inner[1] < b.x_outer[1]
        assert b.y_outer[0] < b.y_inner[0] < b.y_inner[1] < b.y_outer[1]


class TestDisambiguateCorners:

    def test_01_axis_aligned_boxes(self):
        img = GrayImage.from_array(np.zeros((100, 120)))
        boxes = BoundingBoxPair((10.0, 100.0), (10.0, 100.0), (20.0, 80.0), (20.0, 80.0))
        corners = disambiguate_corners(img, boxes).corners
        np.testing.assert_allclose(corners, [[10, 20], [100, 20], [100, 80], [10, 80]])

    def test_02_uniform_ring(self):
        img = GrayImage.from_array(np.full((100, 120), 0.5))
        boxes = BoundingBoxPair((10.0, 100.0), (30.0, 80.0), (20.0, 80.0), (20.0, 80.0))
        with pytest.raises(AmbiguousOrientation):
            disambiguate_corners(img, boxes)

    def test_03_sheared_module(self):
        img, truth, _ = generate_scene("sheared")
        found = detect_module(img)
        assert _corner_error(found.corners, truth.corners) < 0.02 * _diagonal(truth.corners)


class TestDetectModule:

    def test_01_frontal(self):
        img, truth, _ = generate_scene("frontal")
        found = detect_module(img)
        assert _corner_error(found.corners, truth.corners) < 0.02 * _diagonal(truth.corners)
        assert {"x_peak_ratio", "y_peak_ratio", "module_contrast"} <= set(found.confidence)

    def test_02_rotated(self):
        img, truth, _ = generate_scene("rotated")
        found = detect_module(img)
        assert polygon_iou(found.corners, truth.corners) > 0.95

    def test_03_multi_module_picks_the_whole_primary(self):
        img, truth, _ = generate_scene("multi")
        found = detect_module(img)
        assert polygon_iou(found.corners, truth.corners) > 0.9

    def test_04_noise_only(self):
        img, _, _ = generate_scene("noise", seed=3)
        with pytest.raises((NoModuleFound, AmbiguousOrientation)):
            detect_module(img)

    def test_05_blank_image(self):
        img, _, _ = generate_scene("blank")
        with pytest.raises(NoModuleFound):
            detect_module(img)

    def test_06_long_side_first(self):
        img, _, _ = generate_scene("tilt", tilt_deg=20.0)
        c = detect_module(img).corners
        assert np.linalg.norm(c[1] - c[0]) >= np.linalg.norm(c[2] - c[1])

    def test_07_translation_equivariance(self):
        base, _, _ = generate_scene("frontal", seed=5)
        moved, _, _ = generate_scene("frontal", seed=5, shift=(17.0, 0.0))
        a = detect_module(base).corners
        b = detect_module(moved).corners
        np.testing.assert_allclose(b - a, np.tile([17.0, 0.0], (4, 1)), atol=1.0)

    def test_08_intensity_scale_invariance(self):
        img, _, _ = generate_scene("rotated", seed=6)
        a = detect_module(img).corners
        b = detect_module(img.scaled(0.5)).corners
        np.testing.assert_allclose(a, b, atol=1e-9)

    @pytest.mark.parametrize("roll", [0.0, 20.0, 30.0, 45.0])
    @pytest.mark.parametrize("fill", [0.4, 0.55, 0.7])
    def test_09_in_plane_rotation_sweep(self, roll, fill):
        img, truth, _ = generate_scene("frontal", seed=9, roll_deg=roll, fill=fill, noise_sigma=0.02)
        found = detect_module(img)
        assert polygon_iou(found.corners, truth.corners) > 0.9

    def test_10_inner_box_nested_in_outer_box(self):
        rng = np.random.default_rng(10)
        for k in range(12):
            if k % 2:
                params = {"roll_deg": float(rng.uniform(-40.0, 40.0))}
            else:
                params = {"tilt_deg": float(rng.uniform(0.0, 40.0))}
            img, _, _ = generate_scene("frontal", seed=k, fill=float(rng.uniform(0.45, 0.65)), **params)
            assert detect_module(img).boxes.contains_inner(), params
