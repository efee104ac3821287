import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from elgrid.models.errors import PointAtInfinity, SceneError
from elgrid.models.geometry import Homography
from elgrid.models.image import GrayImage
from elgrid.models.scene import SceneSpec, SceneTruth
from elgrid.utils.geometry import model_grid, project_points

logger = logging.getLogger("ELGRID")

ROW_CHUNK = 128
SUITES = ("frontal", "tilt-sweep", "multi-module")


def perspective_from_tilt(
    angle: float,
    focal: float = 4.0,
    cols: int = 10,
    rows: int = 6,
    width: int = 1000,
    height: int = 800,
    roll: float = 0.0,
    fill: float = 0.6,
    shift: Tuple[float, float] = (0.0, 0.0),
) -> Homography:
    """
    模組先在平面內旋轉 roll 度 (roll = 90 為直式擺放)，再繞影像垂直軸傾斜 angle 度，
    以針孔相機 (距離 D = focal * N，model 單位) 成像。
    angle = 0 時退化為相似轉換：每 cell k 像素、模組置中。
    """
    if abs(angle) >= 90.0:
        raise SceneError(f"Tilt of {angle} degrees leaves the module plane edge-on")
    if abs(angle) >= 89.0:
        logger.warning(f"Tilt of {angle} degrees is close to edge-on; projection is ill-conditioned")

    t, r = math.radians(angle), math.radians(roll)
    ct, st = math.cos(t), math.sin(t)
    cr, sr = math.cos(r), math.sin(r)
    d = focal * cols

    center = np.array([[1.0, 0.0, -0.5 * cols], [0.0, 1.0, -0.5 * rows], [0.0, 0.0, 1.0]])
    in_plane = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    # 平面座標 (X, Y) -> 相機座標 (X cos, Y, D + X sin)
    tilt = np.array([[ct, 0.0, 0.0], [0.0, 1.0, 0.0], [st, 0.0, d]])

    extent_x = abs(cols * cr) + abs(rows * sr)
    extent_y = abs(cols * sr) + abs(rows * cr)
    k = fill * min(width / extent_x, height / extent_y)
    cx, cy = 0.5 * (width - 1) + shift[0], 0.5 * (height - 1) + shift[1]
    intrinsics = np.array([[k * d, 0.0, cx], [0.0, k * d, cy], [0.0, 0.0, 1.0]])
    return Homography(intrinsics @ tilt @ in_plane @ center)


def scene_homography(spec: SceneSpec) -> Homography:
    if spec.homography is not None:
        return Homography.from_list(spec.homography)
    return perspective_from_tilt(
        spec.tilt_deg,
        spec.focal,
        spec.cols,
        spec.rows,
        spec.width,
        spec.height,
        spec.roll_deg,
        spec.fill,
        spec.shift,
    )


def scene_truth(spec: SceneSpec) -> SceneTruth:
    h = scene_homography(spec)
    grid = model_grid(spec.cols, spec.rows)
    try:
        corners = project_points(h, grid.corners)
        lattice = project_points(h, grid.points)
    except PointAtInfinity as exc:
        raise SceneError("Module crosses the horizon of the camera") from exc

    inside = (
        (corners[:, 0] >= 0) & (corners[:, 0] <= spec.width - 1)
        & (corners[:, 1] >= 0) & (corners[:, 1] <= spec.height - 1)
    )
    if not inside.all():
        raise SceneError(f"Module corners leave the {spec.width}x{spec.height} image: {corners.round(1).tolist()}")

    neighbors = []
    for ox, oy in spec.neighbor_offsets:
        try:
            neighbors.append(project_points(h, grid.corners + np.array([ox, oy])))
        except PointAtInfinity:
            continue
    return SceneTruth(h, corners, lattice, neighbors)


def _module_intensity(spec: SceneSpec, lx: np.ndarray, ly: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """
    回傳 model 座標 (lx, ly) 的亮度，模組外為 NaN。
    cells: (M, N) 每個 cell 的亮度。
    """
    n, m = spec.cols, spec.rows
    out = np.full(lx.shape, np.nan)
    inside = (lx >= 0) & (lx < n) & (ly >= 0) & (ly < m)
    if not inside.any():
        return out
    x, y = lx[inside], ly[inside]
    ci = np.clip(np.floor(x).astype(int), 0, n - 1)
    cj = np.clip(np.floor(y).astype(int), 0, m - 1)
    value = cells[cj, ci]

    if spec.busbar_count:
        centers = (np.arange(spec.busbar_count) + 0.5) / spec.busbar_count
        half = 0.5 * spec.busbar_width
        if spec.busbar_orientation in ("vertical", "both"):
            fx = x - ci
            bar = np.any(np.abs(fx[:, None] - centers[None, :]) < half, axis=1)
            value = np.where(bar, spec.busbar_level, value)
        if spec.busbar_orientation in ("horizontal", "both"):
            fy = y - cj
            bar = np.any(np.abs(fy[:, None] - centers[None, :]) < half, axis=1)
            value = np.where(bar, spec.busbar_level, value)

    # 相鄰 cell 之間的暗線只在模組內部，外框不畫
    half = 0.5 * spec.ridge_width
    rx, ry = np.round(x), np.round(y)
    ridge = ((rx >= 1) & (rx <= n - 1) & (np.abs(x - rx) < half)) | (
        (ry >= 1) & (ry <= m - 1) & (np.abs(y - ry) < half)
    )
    value = np.where(ridge, spec.ridge_level, value)
    out[inside] = value
    return out


def render(spec: SceneSpec, seed: int = 0) -> Tuple[GrayImage, SceneTruth]:
    """
    以 H_true 的反矩陣將每個像素 2x2 子取樣點映射回 model 平面上色，平均後加高斯雜訊。
    相同 seed 產生完全相同的影像；ground truth 與 seed 無關。
    """
    truth = scene_truth(spec)
    rng = np.random.default_rng(seed)
    modules = [(0.0, 0.0)] + [tuple(o) for o in spec.neighbor_offsets]
    cells = [
        np.clip(
            spec.cell_mean + spec.cell_jitter * rng.uniform(-1.0, 1.0, (spec.rows, spec.cols)),
            spec.ridge_level,
            1.0,
        )
        for _ in modules
    ]

    h_inv = truth.homography.inverse().matrix
    # 模組所在那一側的齊次尺度符號；另一側是地平線之後
    center = h_inv @ np.array([*truth.corners.mean(axis=0), 1.0])
    front = np.sign(center[2])

    img = np.empty((spec.height, spec.width))
    sub = np.array([-0.25, 0.25])
    xs = np.arange(spec.width, dtype=np.float64)
    for r0 in range(0, spec.height, ROW_CHUNK):
        ys = np.arange(r0, min(r0 + ROW_CHUNK, spec.height), dtype=np.float64)
        acc = np.zeros((len(ys), spec.width))
        for dy in sub:
            for dx in sub:
                gx, gy = np.meshgrid(xs + dx, ys + dy)
                q0 = h_inv[0, 0] * gx + h_inv[0, 1] * gy + h_inv[0, 2]
                q1 = h_inv[1, 0] * gx + h_inv[1, 1] * gy + h_inv[1, 2]
                q2 = h_inv[2, 0] * gx + h_inv[2, 1] * gy + h_inv[2, 2]
                visible = np.sign(q2) == front
                with np.errstate(divide="ignore", invalid="ignore"):
                    mx, my = q0 / q2, q1 / q2
                value = np.full(gx.shape, spec.background)
                # 主模組最後畫，重疊時以主模組為準
                for (ox, oy), cell in reversed(list(zip(modules, cells))):
                    v = _module_intensity(spec, mx - ox, my - oy, cell)
                    hit = visible & ~np.isnan(v)
                    value[hit] = v[hit]
                acc += value
        img[r0:r0 + len(ys)] = acc / 4.0

    if spec.noise_sigma > 0:
        img += rng.normal(0.0, spec.noise_sigma, img.shape)
    return GrayImage.from_array(np.clip(img, 0.0, 1.0), copy=False), truth


def builtin_suite(name: str, seed: int = 0, count: Optional[int] = None) -> List[Tuple[str, SceneSpec]]:
    """
    frontal: 正面模組，雜訊與平移依 seed 變化。
    tilt-sweep: 直式模組繞垂直軸 0..80 度，每 10 度一張 (短邊被壓縮)。
    multi-module: 一個完整模組加上 1 到 2 個部分可見的相鄰模組。
    """
    if name == "frontal":
        total = count or 1
        scenes = []
        for k in range(total):
            rng = np.random.default_rng(seed + k)
            shift = tuple(float(v) for v in np.round(rng.uniform(-20.0, 20.0, 2), 2)) if k else (0.0, 0.0)
            noise = round(0.035 * (k % 5) / 4, 4)
            scenes.append((f"frontal_{k:03d}", SceneSpec(shift=shift, noise_sigma=noise)))
        return scenes

    if name == "tilt-sweep":
        return [
            (f"tilt_{a:02d}", SceneSpec(tilt_deg=float(a), roll_deg=90.0, noise_sigma=0.01))
            for a in range(0, 90, 10)
        ]

    if name == "multi-module":
        total = count or 10
        base = SceneSpec()
        gap = 0.5
        sides = {
            "left": (-(base.cols + gap), 0.0),
            "right": (base.cols + gap, 0.0),
            "top": (0.0, -(base.rows + gap)),
            "bottom": (0.0, base.rows + gap),
        }
        names = sorted(sides)
        scenes = []
        for k in range(total):
            rng = np.random.default_rng(seed + k)
            picked = rng.choice(names, size=int(rng.integers(1, 3)), replace=False)
            offsets = [sides[str(s)] for s in sorted(picked)]
            scenes.append((f"multi_{k:03d}", SceneSpec(neighbor_offsets=offsets, noise_sigma=0.01)))
        return scenes

    raise SceneError(f"Unknown scene suite '{name}'; expected one of {', '.join(SUITES)}")
