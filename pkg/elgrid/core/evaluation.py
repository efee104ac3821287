import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy import integrate

from elgrid.models.errors import InvalidInputError, PolygonError
from elgrid.models.results import EvalRecord, RecallCurve

logger = logging.getLogger("ELGRID")

RECALL_POINTS = (0.5, 0.7, 0.9)
RASTER_MIN, RASTER_MAX = 256, 2048


def polygon_area(poly) -> float:
    """Shoelace 有號面積；在 y 向下的影像座標中，順時針為正。"""
    p = np.asarray(poly, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _validate(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) < 3:
        raise PolygonError(f"A polygon needs at least 3 (x, y) vertices, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise PolygonError("Polygon has non-finite vertices")
    if abs(polygon_area(p)) <= 1e-12:
        raise PolygonError("Polygon has zero area")
    return p


def is_convex(poly) -> bool:
    p = np.asarray(poly, dtype=np.float64)
    e = np.roll(p, -1, axis=0) - p
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    cross = cross[np.abs(cross) > 1e-12]
    return bool(np.all(cross > 0) or np.all(cross < 0))


def _positive(poly: np.ndarray) -> np.ndarray:
    return poly if polygon_area(poly) > 0 else poly[::-1]


def clip_polygon(subject, clip) -> np.ndarray:
    """
    Sutherland–Hodgman：以凸多邊形 clip 裁切 subject。
    兩者須為正面積方向；回傳可能為空 (0, 2)。
    """
    out = [tuple(v) for v in np.asarray(subject, dtype=np.float64)]
    clip = np.asarray(clip, dtype=np.float64)

    def side(a, b, p):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])

    for a, b in zip(clip, np.roll(clip, -1, axis=0)):
        if not out:
            break
        src, out = out, []
        for k, cur in enumerate(src):
            prev = src[k - 1]
            s_cur, s_prev = side(a, b, cur), side(a, b, prev)
            if s_cur >= 0:
                if s_prev < 0:
                    t = s_prev / (s_prev - s_cur)
                    out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
                out.append(cur)
            elif s_prev >= 0:
                t = s_prev / (s_prev - s_cur)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def _inside(poly: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Even-odd 規則的點在多邊形內判定。"""
    inside = np.zeros(xs.shape, dtype=bool)
    for (x0, y0), (x1, y1) in zip(poly, np.roll(poly, -1, axis=0)):
        if y0 == y1:
            continue
        crosses = (y0 > ys) != (y1 > ys)
        x_at = x0 + (ys - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (xs < x_at)
    return inside


def raster_iou(a, b, samples_per_unit: float = 4.0) -> float:
    a, b = _validate(a), _validate(b)
    both = np.vstack([a, b])
    lo, hi = both.min(axis=0), both.max(axis=0)
    nx, ny = (
        int(np.clip(math.ceil((hi[k] - lo[k]) * samples_per_unit), RASTER_MIN, RASTER_MAX)) for k in (0, 1)
    )
    xs = lo[0] + (np.arange(nx) + 0.5) * (hi[0] - lo[0]) / nx
    ys = lo[1] + (np.arange(ny) + 0.5) * (hi[1] - lo[1]) / ny
    gx, gy = np.meshgrid(xs, ys)
    in_a, in_b = _inside(a, gx, gy), _inside(b, gx, gy)
    union = np.count_nonzero(in_a | in_b)
    return 0.0 if union == 0 else float(np.count_nonzero(in_a & in_b) / union)


def polygon_iou(a, b) -> float:
    """兩者皆凸時以多邊形裁切精確計算，否則退回柵格估計。"""
    a, b = _validate(a), _validate(b)
    if not (is_convex(a) and is_convex(b)):
        return raster_iou(a, b)
    a, b = _positive(a), _positive(b)
    inter = clip_polygon(a, b)
    inter_area = abs(polygon_area(inter)) if len(inter) >= 3 else 0.0
    union = polygon_area(a) + polygon_area(b) - inter_area
    return float(min(max(inter_area / union, 0.0), 1.0))


def recall_curve(records: Sequence[EvalRecord], thresholds: Optional[Iterable[float]] = None) -> RecallCurve:
    """
    recall(t) = IoU >= t 的比例；AUC 為門檻格點 [0.5, 1.0] 上的梯形積分 (未正規化)。
    """
    if not records:
        raise InvalidInputError("Recall needs at least one evaluation record")
    ious = np.array([r.iou for r in records], dtype=np.float64)
    grid = np.round(np.linspace(0.5, 1.0, 101), 3) if thresholds is None else np.asarray(list(thresholds), dtype=np.float64)
    recall = (ious[None, :] >= grid[:, None]).mean(axis=1)
    auc = float(integrate.trapezoid(recall, grid))
    at = {t: float(np.mean(ious >= t)) for t in RECALL_POINTS}
    return RecallCurve(grid, recall, auc, at)


def evaluate_records(
    detections: Dict[str, Optional[np.ndarray]],
    truths: Dict[str, np.ndarray],
) -> List[EvalRecord]:
    """
    依影像 id 配對偵測結果與標註；兩邊 id 必須完全一致。
    偵測失敗 (None) 記為 IoU = 0。
    """
    missing_pred = sorted(set(truths) - set(detections))
    missing_truth = sorted(set(detections) - set(truths))
    if missing_pred or missing_truth:
        logger.warning(f"Unmatched ids: no prediction for {missing_pred}, no annotation for {missing_truth}")
        raise InvalidInputError(
            f"Unmatched image ids (no prediction: {missing_pred}; no annotation: {missing_truth})"
        )

    records = []
    for image_id in sorted(truths):
        truth = np.asarray(truths[image_id], dtype=np.float64)
        detected = detections[image_id]
        if detected is None:
            records.append(EvalRecord(image_id, None, truth, 0.0))
            continue
        detected = np.asarray(detected, dtype=np.float64)
        records.append(EvalRecord(image_id, detected, truth, polygon_iou(detected, truth)))
    return records
