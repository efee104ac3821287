from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np

from elgrid.models.config import DetectorConfig
from elgrid.models.errors import InvalidInputError
from elgrid.models.geometry import Homography
from elgrid.models.image import GrayImage

SCHEMA_VERSION = "1.0"


def _points(arr) -> List[List[float]]:
    return [[float(x), float(y)] for x, y in np.asarray(arr, dtype=np.float64)]


@dataclass(frozen=True)
class Extremum:
    """梯度訊號上的極值，span 為峰值消失的左右位置。"""
    index: int
    kind: Literal["maximum", "minimum"]
    value: float
    span: Tuple[float, float]

    def __post_init__(self):
        left, right = self.span
        if not left <= self.index <= right:
            raise InvalidInputError(f"Span {self.span} does not bracket index {self.index}")
        if self.kind == "maximum" and self.value <= 0:
            raise InvalidInputError("A maximum must have a positive value")
        if self.kind == "minimum" and self.value >= 0:
            raise InvalidInputError("A minimum must have a negative value")

    def to_dict(self):
        return {"index": self.index, "kind": self.kind, "value": self.value, "span": list(self.span)}


@dataclass(frozen=True)
class BoundingBoxPair:
    """
    外框 B1 與內框 B2。
    x_outer = (x1-, x2+), x_inner = (x1+, x2-)，y 同理 (y1 = 上緣, y2 = 下緣)。
    """
    x_outer: Tuple[float, float]
    x_inner: Tuple[float, float]
    y_outer: Tuple[float, float]
    y_inner: Tuple[float, float]

    @staticmethod
    def _corners(xs, ys) -> np.ndarray:
        return np.array([[xs[0], ys[1]], [xs[1], ys[1]], [xs[1], ys[0]], [xs[0], ys[0]]], dtype=np.float64)

    @property
    def outer(self) -> np.ndarray:
        return self._corners(self.x_outer, self.y_outer)

    @property
    def inner(self) -> np.ndarray:
        return self._corners(self.x_inner, self.y_inner)

    def contains_inner(self) -> bool:
        return (
            self.x_outer[0] <= self.x_inner[0] <= self.x_inner[1] <= self.x_outer[1]
            and self.y_outer[0] <= self.y_inner[0] <= self.y_inner[1] <= self.y_outer[1]
        )

    def to_dict(self):
        return {"outer": _points(self.outer), "inner": _points(self.inner)}


@dataclass(frozen=True)
class ModuleDetection:
    """粗定位結果：b1..b4 順時針，(b1, b2) 為模組長邊。"""
    corners: np.ndarray  # (4, 2)
    boxes: BoundingBoxPair
    confidence: Dict[str, float] = field(default_factory=dict)

    def to_dict(self):
        return {
            "corners": _points(self.corners),
            "boxes": self.boxes.to_dict(),
            "confidence": {k: float(v) for k, v in self.confidence.items()},
        }


class AxisFeature(str, Enum):
    RIDGE = "ridge"
    EDGE_LEADING = "edge_leading"    # 左 / 上緣：梯度最大值
    EDGE_TRAILING = "edge_trailing"  # 右 / 下緣：梯度最小值


@dataclass(frozen=True)
class CrossingType:
    x_axis: AxisFeature
    y_axis: AxisFeature


@dataclass(frozen=True)
class Patch:
    """以 H 校正、中心約為格點 m 的局部影像 (約一個 cell 大小)。"""
    pixels: GrayImage
    center_model: np.ndarray
    model_to_patch: np.ndarray  # 3x3 affine
    homography: Homography
    clamped_fraction: float = 0.0

    def patch_to_model(self, u: float, v: float) -> np.ndarray:
        inv = np.linalg.inv(self.model_to_patch)
        p = inv @ np.array([u, v, 1.0])
        return p[:2] / p[2]


@dataclass
class CrossingEntry:
    i: int
    j: int
    model: np.ndarray
    image: Optional[np.ndarray] = None
    inlier: bool = False
    residual: Optional[float] = None

    @property
    def miss(self) -> bool:
        return self.image is None

    def to_dict(self) -> Dict[str, Any]:
        if self.image is None:
            return {"i": self.i, "j": self.j, "miss": True}
        return {
            "i": self.i,
            "j": self.j,
            "x": float(self.image[0]),
            "y": float(self.image[1]),
            "inlier": bool(self.inlier),
            "residual": None if self.residual is None else float(self.residual),
        }


@dataclass
class CrossingSet:
    entries: List[CrossingEntry]
    homography: Homography
    error: float
    threshold_px: float

    @property
    def detected_count(self) -> int:
        return sum(1 for e in self.entries if not e.miss)

    @property
    def inlier_count(self) -> int:
        return sum(1 for e in self.entries if e.inlier)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class DetectionResult:
    corners: np.ndarray          # 以精修後 H 投影的模組角點
    initial_corners: np.ndarray  # 模組粗定位角點
    module: ModuleDetection
    h0: Homography
    h: Homography
    crossings: CrossingSet
    cols: int
    rows: int
    timings_ms: Dict[str, float]
    config: DetectorConfig

    def to_dict(self, image_id: str = "", include_timings: bool = True) -> Dict[str, Any]:
        out = {
            "schema_version": SCHEMA_VERSION,
            "status": "ok",
            "image": image_id,
            "rows": self.rows,
            "cols": self.cols,
            "corners": _points(self.corners),
            "initial_corners": _points(self.initial_corners),
            "h0": self.h0.to_list(),
            "h": self.h.to_list(),
            "error": float(self.crossings.error),
            "crossings": [e.to_dict() for e in self.crossings.entries],
            "config": self.config.model_dump(),
        }
        if include_timings:
            out["timings_ms"] = {k: float(v) for k, v in self.timings_ms.items()}
        return out


@dataclass(frozen=True)
class RectifiedCell:
    i: int
    j: int
    image: GrayImage


@dataclass(frozen=True)
class EvalRecord:
    image_id: str
    detected: Optional[np.ndarray]
    truth: np.ndarray
    iou: float

    def __post_init__(self):
        if not 0.0 <= self.iou <= 1.0:
            raise InvalidInputError(f"IoU out of range: {self.iou}")
        if self.detected is None and self.iou != 0.0:
            raise InvalidInputError("A missed detection must have IoU 0")


@dataclass(frozen=True)
class RecallCurve:
    thresholds: np.ndarray
    recall: np.ndarray
    auc: float
    recall_at: Dict[float, float]

    def to_dict(self):
        return {
            "auc": self.auc,
            "recall_at": {f"{k:.1f}": v for k, v in self.recall_at.items()},
            "thresholds": self.thresholds.tolist(),
            "recall": self.recall.tolist(),
        }
