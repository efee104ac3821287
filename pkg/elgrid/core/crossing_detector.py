import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np

from elgrid.core.module_detector import find_extrema
from elgrid.core.robust_fit import ransac_fit_arrays
from elgrid.models.config import DetectorConfig
from elgrid.models.errors import InsufficientConsensus, PatchOutsideImage, PointAtInfinity
from elgrid.models.geometry import Homography, ModelGrid
from elgrid.models.image import GrayImage, Signal1D
from elgrid.models.results import AxisFeature, CrossingEntry, CrossingSet, CrossingType, Patch
from elgrid.utils.geometry import project, project_points, squared_residuals
from elgrid.utils.math_utils import SignalProcessor

logger = logging.getLogger("ELGRID")

Hit = Tuple[int, int, np.ndarray, Optional[np.ndarray]]


class CrossingDetector:
    """
    以初始 H0 將每個格點附近約一個 cell 的區域校正成 patch，
    在 patch 的 1-D 統計量上找 ridge / edge，得到格點的影像座標。
    """

    def __init__(self, config: Optional[DetectorConfig] = None):
        self.cfg = config or DetectorConfig()
        self.processor = SignalProcessor()

    @staticmethod
    def cell_size(h: Homography, i: int, j: int) -> float:
        a = project(h, (i, j))
        b = project(h, (i + 1, j + 1))
        return float(np.linalg.norm(a - b))

    @staticmethod
    def classify_crossing(i: int, j: int, cols: int, rows: int) -> CrossingType:
        def axis(k, last):
            if k == 0:
                return AxisFeature.EDGE_LEADING
            if k == last:
                return AxisFeature.EDGE_TRAILING
            return AxisFeature.RIDGE

        return CrossingType(axis(i, cols), axis(j, rows))

    def _model_to_patch(self, m: np.ndarray) -> np.ndarray:
        # patch 像素 k 的中心對應 model 座標 m - 0.5 + (k + 0.5) / P
        p = self.cfg.patch_px
        return np.array(
            [
                [p, 0.0, -p * (m[0] - 0.5) - 0.5],
                [0.0, p, -p * (m[1] - 0.5) - 0.5],
                [0.0, 0.0, 1.0],
            ]
        )

    def extract_patch(self, img: GrayImage, h: Homography, m) -> Patch:
        m = np.asarray(m, dtype=np.float64)
        p = self.cfg.patch_px
        offsets = -0.5 + (np.arange(p) + 0.5) / p
        mx, my = np.meshgrid(m[0] + offsets, m[1] + offsets)
        try:
            xy = project_points(h, np.stack([mx.ravel(), my.ravel()], axis=1))
        except PointAtInfinity as exc:
            raise PatchOutsideImage(f"Patch around {tuple(m)} reaches infinity") from exc

        xs, ys = xy[:, 0].reshape(p, p), xy[:, 1].reshape(p, p)
        outside = (xs < -0.5) | (xs > img.width - 0.5) | (ys < -0.5) | (ys > img.height - 0.5)
        fraction = float(outside.mean())
        if fraction > self.cfg.max_clamped_fraction:
            raise PatchOutsideImage(f"{fraction:.0%} of the patch around {tuple(m)} lies outside the image")

        pixels = GrayImage.from_array(self.processor.sample_points(img, xs, ys), validate=False, copy=False)
        return Patch(pixels, m, self._model_to_patch(m), h, fraction)

    def _extrema(self, grad: Signal1D):
        return find_extrema(grad, self.cfg.patch_threshold, self.cfg.vanish_fraction)

    def detect_ridge(self, grad: Signal1D) -> Optional[float]:
        """
        暗線 = 梯度極小值緊接極大值。
        成對數為奇數時取位置居中的一對 (兩側 busbar 對稱)，回傳兩者間梯度的零交越；
        偶數時無法判斷，視為 miss。
        """
        extrema = self._extrema(grad)
        pairs = [
            (a, b)
            for a, b in zip(extrema, extrema[1:])
            if a.kind == "minimum" and b.kind == "maximum"
        ]
        if len(pairs) % 2 == 0:
            return None
        low, high = pairs[len(pairs) // 2]
        x = self.processor.zero_crossing(grad.values, low.index, high.index)
        return None if np.isnan(x) else x

    def detect_edge(self, grad: Signal1D, side: AxisFeature) -> Optional[float]:
        # 左/上緣由暗轉亮 -> 極大值；右/下緣 -> 極小值
        kind = "maximum" if side == AxisFeature.EDGE_LEADING else "minimum"
        candidates = [e for e in self._extrema(grad) if e.kind == kind]
        if not candidates:
            return None
        center = 0.5 * (len(grad) - 1)
        best = min(candidates, key=lambda e: (abs(e.index - center), e.index))
        return float(best.index)

    def _locate_axis(self, grad: Signal1D, feature: AxisFeature) -> Optional[float]:
        if feature == AxisFeature.RIDGE:
            return self.detect_ridge(grad)
        return self.detect_edge(grad, feature)

    def detect_crossing(self, patch: Patch, ctype: CrossingType) -> Optional[np.ndarray]:
        sigma = self.cfg.sigma_factor * max(patch.pixels.width, patch.pixels.height)
        gx = self.processor.smoothed_gradient(self.processor.col_sum(patch.pixels), sigma)
        u = self._locate_axis(gx, ctype.x_axis)
        if u is None:
            return None
        gy = self.processor.smoothed_gradient(self.processor.row_sum(patch.pixels), sigma)
        v = self._locate_axis(gy, ctype.y_axis)
        if v is None:
            return None
        try:
            return project(patch.homography, patch.patch_to_model(u, v))
        except PointAtInfinity:
            return None

    def _detect_one(self, img: GrayImage, h0: Homography, grid: ModelGrid, k: int) -> Hit:
        i, j = grid.indices[k]
        m = grid.points[k]
        try:
            patch = self.extract_patch(img, h0, m)
        except PatchOutsideImage as exc:
            logger.warning(f"Crossing ({i}, {j}) dropped: {exc}")
            return i, j, m, None
        return i, j, m, self.detect_crossing(patch, self.classify_crossing(i, j, grid.cols, grid.rows))

    def locate_crossings(self, img: GrayImage, h0: Homography, grid: ModelGrid) -> List[Hit]:
        """每個格點各自獨立；多執行緒時 map 仍依格點順序回傳。"""
        order = range(len(grid))
        if self.cfg.patch_workers > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.patch_workers) as pool:
                return list(pool.map(lambda k: self._detect_one(img, h0, grid, k), order))
        return [self._detect_one(img, h0, grid, k) for k in order]

    def refine(self, hits: List[Hit], grid: ModelGrid, cell_px: float) -> CrossingSet:
        found = [(i, j, m, x) for i, j, m, x in hits if x is not None]
        if len(found) < 4:
            raise InsufficientConsensus(f"Only {len(found)} crossings detected; at least 4 are needed")
        model = np.array([m for _, _, m, _ in found])
        image = np.array([x for _, _, _, x in found])

        fit = ransac_fit_arrays(model, image, grid.cols, grid.rows, cell_px, self.cfg)
        residuals = np.sqrt(squared_residuals(fit.homography, model, image))

        entries: List[CrossingEntry] = []
        flags = iter(zip(fit.inliers, residuals))
        for i, j, m, x in hits:
            if x is None:
                entries.append(CrossingEntry(i, j, m))
                continue
            inlier, res = next(flags)
            entries.append(CrossingEntry(i, j, m, x, bool(inlier), float(res)))
        return CrossingSet(entries, fit.homography, fit.error, self.cfg.inlier_fraction * cell_px)

    def detect_all_crossings(self, img: GrayImage, h0: Homography, grid: ModelGrid) -> CrossingSet:
        # 5% 規則的 cell 大小取模組中央 cell 的對角線
        cell_px = self.cell_size(h0, grid.cols // 2, grid.rows // 2)
        hits = self.locate_crossings(img, h0, grid)
        logger.debug(f"{sum(x is not None for *_, x in hits)}/{len(hits)} crossings located (cell {cell_px:.1f}px)")
        return self.refine(hits, grid, cell_px)
