import numpy as np

from elgrid.core.scene_generator import render
from elgrid.models.image import GrayImage
from elgrid.models.scene import SceneSpec


def sheared_homography(k=60.0, shear=0.15, tx=170.0, ty=220.0):
    """Affine shear: the module's left and right sides lean to the right."""
    return [k, shear * k, tx, 0.0, k, ty, 0.0, 0.0, 1.0]


def generate_scene(mode="frontal", seed=0, **overrides):
    """
    Render EL-like test scenes for different scenarios.

    Args:
        mode (str): 'frontal', 'tilt', 'multi', 'sheared', 'rotated', 'noise', 'blank'

    Returns:
        tuple: (GrayImage, SceneTruth or None, SceneSpec or None)
    """
    if mode == "noise":
        # No module: uniform noise only
        rng = np.random.default_rng(seed)
        shape = (overrides.get("height", 200), overrides.get("width", 240))
        return GrayImage.from_array(rng.uniform(0.0, 1.0, shape)), None, None

    if mode == "blank":
        shape = (overrides.get("height", 120), overrides.get("width", 160))
        return GrayImage.from_array(np.full(shape, overrides.get("level", 1.0))), None, None

    if mode == "frontal":
        params = {}
    elif mode == "tilt":
        # Portrait module rotated about the vertical image axis
        params = {"tilt_deg": 40.0, "roll_deg": 90.0}
    elif mode == "multi":
        params = {"neighbor_offsets": [(10.5, 0.0)]}
    elif mode == "sheared":
        params = {"homography": sheared_homography()}
    elif mode == "rotated":
        params = {"roll_deg": 10.0}
    else:
        raise ValueError(f"Unknown scene mode: {mode}")

    params.update(overrides)
    spec = SceneSpec(**params)
    img, truth = render(spec, seed=seed)
    return img, truth, spec
