import logging
import time
from contextlib import contextmanager
from typing import Dict, List, Optional

import numpy as np

from elgrid.core.crossing_detector import CrossingDetector
from elgrid.core.module_detector import ModuleDetector
from elgrid.models.config import DetectorConfig
from elgrid.models.errors import ELGridError, InvalidInputError, StageError
from elgrid.models.geometry import Homography
from elgrid.models.image import GrayImage
from elgrid.models.results import DetectionResult, RectifiedCell
from elgrid.storage.config_loader import ConfigLoader
from elgrid.utils.geometry import dlt_arrays, model_grid, project_points
from elgrid.utils.math_utils import SignalProcessor

# 設定 Logger
logger = logging.getLogger("ELGRID")

NUMERIC_ERRORS = (np.linalg.LinAlgError, FloatingPointError, ValueError, ZeroDivisionError)


@contextmanager
def _stage(name: str):
    """把階段內的錯誤統一包成 StageError，並標上失敗的階段。"""
    try:
        yield
    except StageError:
        raise
    except ELGridError as exc:
        exc.stage = name
        raise StageError(name, exc) from exc
    except NUMERIC_ERRORS as exc:
        raise StageError(name, exc) from exc


class ELGridDetector:
    def __init__(self, config: Optional[DetectorConfig] = None, config_path: Optional[str] = None):
        if config is None and config_path is not None:
            config = ConfigLoader.load_config(config_path).detector
        self.config = config or DetectorConfig()
        self.module_detector = ModuleDetector(self.config)
        self.crossing_detector = CrossingDetector(self.config)

    def detect(self, img: GrayImage, cols: int, rows: int) -> DetectionResult:
        """
        SDK 主入口方法
        :param img: 正規化後的 EL 影像
        :param cols: 模組長邊的 cell 數 N
        :param rows: 模組短邊的 cell 數 M (N >= M)
        :return: DetectionResult，角點依 (0,0), (N,0), (N,M), (0,M) 對應
        """
        timings: Dict[str, float] = {}
        start = time.perf_counter()

        # 1. 模組粗定位
        with _stage("module"):
            module = self.module_detector.detect(img)
        timings["module"] = (time.perf_counter() - start) * 1000.0

        # 2. 四個角點對應 -> 初始 H0
        mark = time.perf_counter()
        with _stage("homography"):
            grid = model_grid(cols, rows)
            h0 = dlt_arrays(grid.corners, module.corners)

        # 3. 每個格點的校正 patch 與 ridge / edge 偵測
        with _stage("patches"):
            cell_px = self.crossing_detector.cell_size(h0, grid.cols // 2, grid.rows // 2)
            hits = self.crossing_detector.locate_crossings(img, h0, grid)
        timings["patches"] = (time.perf_counter() - mark) * 1000.0

        # 4. RANSAC 剔除離群點並重新估計 H
        mark = time.perf_counter()
        with _stage("ransac"):
            crossings = self.crossing_detector.refine(hits, grid, cell_px)
            corners = project_points(crossings.homography, grid.corners)
        timings["ransac"] = (time.perf_counter() - mark) * 1000.0
        timings["total"] = (time.perf_counter() - start) * 1000.0

        logger.debug(f"Stage timings (ms): {timings}")
        logger.info(
            f"Detected {cols}x{rows} module: {crossings.detected_count}/{len(grid)} crossings, "
            f"{crossings.inlier_count} inliers, {timings['total']:.1f} ms"
        )
        return DetectionResult(
            corners=corners,
            initial_corners=module.corners,
            module=module,
            h0=h0,
            h=crossings.homography,
            crossings=crossings,
            cols=cols,
            rows=rows,
            timings_ms=timings,
            config=self.config,
        )

    @staticmethod
    def extract_cells(img: GrayImage, h: Homography, cols: int, rows: int, cell_px: int) -> List[RectifiedCell]:
        """將每個 model cell [i, i+1] x [j, j+1] 經 H 取樣成 cell_px x cell_px 的校正影像。"""
        if cell_px <= 0:
            raise InvalidInputError(f"cell_px must be positive, got {cell_px}")
        offsets = (np.arange(cell_px) + 0.5) / cell_px
        ox, oy = np.meshgrid(offsets, offsets)
        local = np.stack([ox.ravel(), oy.ravel()], axis=1)

        cells = []
        for j in range(rows):
            for i in range(cols):
                xy = project_points(h, local + np.array([i, j]))
                values = SignalProcessor.sample_points(img, xy[:, 0], xy[:, 1]).reshape(cell_px, cell_px)
                cells.append(RectifiedCell(i, j, GrayImage.from_array(values, validate=False, copy=False)))
        return cells

    def extract_cells_staged(self, img: GrayImage, result: DetectionResult, cell_px: int) -> List[RectifiedCell]:
        with _stage("cells"):
            return self.extract_cells(img, result.h, result.cols, result.rows, cell_px)


def detect(img: GrayImage, cols: int, rows: int, cfg: Optional[DetectorConfig] = None) -> DetectionResult:
    return ELGridDetector(cfg).detect(img, cols, rows)


def extract_cells(img: GrayImage, h: Homography, cols: int, rows: int, cell_px: int) -> List[RectifiedCell]:
    return ELGridDetector.extract_cells(img, h, cols, rows, cell_px)
