import logging
import math
import os
import sys

import numpy as np
import pytest
from pydantic import ValidationError

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from elgrid.core.scene_generator import builtin_suite, perspective_from_tilt, scene_truth
from elgrid.models.errors import SceneError
from elgrid.models.scene import SceneSpec
from tests.data_generator import generate_scene


class TestSceneSpec:

    def test_01_long_side_first(self):
        with pytest.raises(ValidationError):
            SceneSpec(cols=4, rows=6)

    def test_02_intensity_ordering(self):
        with pytest.raises(ValidationError):
            SceneSpec(ridge_level=0.02)
        with pytest.raises(ValidationError):
            SceneSpec(busbar_level=0.9)

    def test_03_homography_length(self):
        with pytest.raises(ValidationError):
            SceneSpec(homography=[1.0, 0.0, 0.0])


class TestPerspective:

    def test_01_frontal_is_a_similarity(self):
        m = perspective_from_tilt(0.0).matrix
        assert m[2, 0] == pytest.approx(0.0, abs=1e-15)
        assert m[2, 1] == pytest.approx(0.0, abs=1e-15)
        assert m[0, 1] == pytest.approx(0.0, abs=1e-15)
        assert m[0, 0] == pytest.approx(m[1, 1])

    def test_02_single_cell_is_square(self):
        truth = scene_truth(SceneSpec(cols=1, rows=1))
        c = truth.corners
        sides = [np.linalg.norm(c[(k + 1) % 4] - c[k]) for k in range(4)]
        np.testing.assert_allclose(sides, sides[0], rtol=1e-9)
        assert len(truth.lattice) == 4

    def test_03_lattice_size(self):
        truth = scene_truth(SceneSpec())
        assert truth.lattice.shape == (77, 2)
        np.testing.assert_allclose(truth.lattice[0], truth.corners[0])
        np.testing.assert_allclose(truth.lattice[-1], truth.corners[2])

    def test_04_foreshortening_closed_form(self):
        theta = math.radians(60.0)
        d, half = 4.0 * 10, 10 / 2
        c = scene_truth(SceneSpec(tilt_deg=60.0)).corners
        left = abs(c[3, 1] - c[0, 1])
        right = abs(c[2, 1] - c[1, 1])
        expected = (d + half * math.sin(theta)) / (d - half * math.sin(theta))
        assert left / right == pytest.approx(expected, rel=1e-9)

    def test_05_near_edge_on_warns(self, caplog):
        with caplog.at_level(logging.WARNING, logger="ELGRID"):
            perspective_from_tilt(89.9)
        assert "edge-on" in caplog.text

    def test_06_edge_on_rejected(self):
        with pytest.raises(SceneError):
            perspective_from_tilt(90.0)
        with pytest.raises(SceneError):
            perspective_from_tilt(-95.0)

    def test_07_module_leaving_the_image(self):
        with pytest.raises(SceneError):
            scene_truth(SceneSpec(shift=(600.0, 0.0)))

    def test_08_module_across_the_horizon(self):
        with pytest.raises(SceneError):
            scene_truth(SceneSpec(homography=[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -0.1, 0.0, 1.0]))


class TestRender:

    def test_01_same_seed_same_image(self):
        a, _, _ = generate_scene("frontal", seed=3, noise_sigma=0.02, width=320, height=240)
        b, _, _ = generate_scene("frontal", seed=3, noise_sigma=0.02, width=320, height=240)
        c, _, _ = generate_scene("frontal", seed=4, noise_sigma=0.02, width=320, height=240)
        np.testing.assert_array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)

    def test_02_truth_does_not_depend_on_seed(self):
        _, a, _ = generate_scene("tilt", seed=1)
        _, b, _ = generate_scene("tilt", seed=9)
        np.testing.assert_array_equal(a.corners, b.corners)

    def test_03_module_brighter_than_background(self):
        img, truth, spec = generate_scene("frontal")
        x0, y0 = truth.corners.min(axis=0).astype(int)
        x1, y1 = truth.corners.max(axis=0).astype(int)
        inside = img.data[y0 + 5:y1 - 5, x0 + 5:x1 - 5].mean()
        assert inside > 0.5
        assert img.data[:y0 - 5, :].mean() == pytest.approx(spec.background, abs=1e-9)

    def test_04_ridges_only_inside(self):
        img, truth, _ = generate_scene("frontal")
        x0, y0 = truth.corners[0]
        # 第一條垂直暗線在 x0 + 1 cell
        cell = (truth.corners[1, 0] - x0) / 10
        row = int(y0 + 0.3 * cell)
        ridge = img.data[row, int(round(x0 + cell))]
        cell_centre = img.data[row, int(round(x0 + 0.1 * cell))]
        assert ridge < cell_centre
        assert img.data[row, int(round(x0)) + 2] > 0.5

    def test_05_neighbours_are_drawn(self):
        img, truth, _ = generate_scene("multi")
        nb = truth.neighbor_corners[0]
        x = int(nb[0, 0] + 20)
        y = int(nb[0, 1] + 0.4 * (nb[3, 1] - nb[0, 1]))
        assert img.data[y, x] > 0.5

    def test_06_values_stay_in_range(self):
        img, _, _ = generate_scene("frontal", noise_sigma=0.2, width=200, height=160)
        assert img.data.min() >= 0.0
        assert img.data.max() <= 1.0

    def test_07_annotation(self):
        _, truth, _ = generate_scene("frontal", width=320, height=240)
        assert truth.annotation() == {"polygon": truth.corners.tolist()}
        assert len(truth.to_dict()["lattice"]) == 77


class TestSuites:

    def test_01_tilt_sweep(self):
        scenes = builtin_suite("tilt-sweep")
        assert [name for name, _ in scenes] == [f"tilt_{a:02d}" for a in range(0, 90, 10)]
        for _, spec in scenes:
            assert spec.roll_deg == 90.0
            truth = scene_truth(spec)
            assert np.all(truth.corners >= 0)

    def test_02_frontal(self):
        scenes = builtin_suite("frontal", seed=5, count=3)
        assert [name for name, _ in scenes] == ["frontal_000", "frontal_001", "frontal_002"]
        assert scenes[0][1].shift == (0.0, 0.0)
        np.testing.assert_allclose([spec.noise_sigma for _, spec in scenes], [0.0, 0.035 / 4, 0.035 / 2], atol=1e-4)
        assert builtin_suite("frontal", seed=5, count=3) == scenes

    def test_03_multi_module(self):
        scenes = builtin_suite("multi-module")
        assert len(scenes) == 10
        for _, spec in scenes:
            assert 1 <= len(spec.neighbor_offsets) <= 2
            for ox, oy in spec.neighbor_offsets:
                assert (ox == 0.0) != (oy == 0.0)

    def test_04_unknown_suite(self):
        with pytest.raises(SceneError):
            builtin_suite("random")
