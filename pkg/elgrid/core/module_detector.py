import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage, optimize, stats

from elgrid.models.config import DetectorConfig
from elgrid.models.errors import AmbiguousOrientation, DegenerateBox, NoModuleFound
from elgrid.models.image import GrayImage, Signal1D
from elgrid.models.results import BoundingBoxPair, Extremum, ModuleDetection
from elgrid.utils.math_utils import SignalProcessor

logger = logging.getLogger("ELGRID")

ExtremumPair = Tuple[Extremum, Extremum]

HALF_MAXIMUM = 0.5


def peak_span(grad: Signal1D, at: Union[Extremum, int], vanish_fraction: float = 0.1) -> Tuple[int, int]:
    """
    從峰值往兩側走，直到 |grad| 低於峰值的 vanish_fraction 或符號改變。
    回傳仍屬於該峰值的最外側 index，超出訊號範圍則夾在兩端。
    """
    g = grad.values
    idx = at.index if isinstance(at, Extremum) else int(at)
    peak = g[idx]
    floor = vanish_fraction * abs(peak)
    sign = np.sign(peak)

    left = idx
    while left - 1 >= 0 and np.sign(g[left - 1]) == sign and abs(g[left - 1]) >= floor:
        left -= 1
    right = idx
    while right + 1 < len(g) and np.sign(g[right + 1]) == sign and abs(g[right + 1]) >= floor:
        right += 1
    return left, right


def find_extrema(grad: Signal1D, k: float, vanish_fraction: float = 0.1) -> List[Extremum]:
    """
    門檻 k * std(grad) 以上的極大值 / 以下的極小值，並做非極大值抑制：
    每一段連續超過門檻的區域只留一個 (同值取較低 index)，
    同類極值若落在平滑半徑 ceil(3 sigma) 內，只保留較強者。
    """
    g = grad.values
    if len(g) == 0:
        return []
    std = float(np.std(g))
    if std == 0.0:
        return []
    thr = k * std
    radius = SignalProcessor.kernel_radius(grad.sigma) if grad.sigma else 1

    found: List[Extremum] = []
    for kind, mask in (("maximum", g > thr), ("minimum", g < -thr)):
        labels, count = ndimage.label(mask)
        picks: List[int] = []
        for region in ndimage.find_objects(labels):
            seg = g[region[0]]
            offset = region[0].start
            # argmax / argmin 本身就取第一個 => 同值時偏向較低 index
            picks.append(offset + int(np.argmax(seg) if kind == "maximum" else np.argmin(seg)))

        kept: List[int] = []
        for p in picks:
            if kept and p - kept[-1] <= radius:
                if abs(g[p]) > abs(g[kept[-1]]):
                    kept[-1] = p
                continue
            kept.append(p)

        for p in kept:
            left, right = peak_span(grad, p, vanish_fraction)
            found.append(Extremum(int(p), kind, float(g[p]), (float(left), float(right))))

    return sorted(found, key=lambda e: e.index)


def select_module(extrema: Sequence[Extremum]) -> ExtremumPair:
    """
    連續同類的極值只保留最強的一個，
    再從 (極大值, 緊接的極小值) 配對中選距離最大者。
    """
    collapsed: List[Extremum] = []
    for ex in extrema:
        if collapsed and collapsed[-1].kind == ex.kind:
            if abs(ex.value) > abs(collapsed[-1].value):
                collapsed[-1] = ex
            continue
        collapsed.append(ex)

    best: Optional[ExtremumPair] = None
    for first, second in zip(collapsed, collapsed[1:]):
        if first.kind == "maximum" and second.kind == "minimum":
            if best is None or second.index - first.index > best[1].index - best[0].index:
                best = (first, second)
    if best is None:
        raise NoModuleFound("No rising edge is followed by a falling edge")
    return best


def strongest_pair(grad: Signal1D, k: float, vanish_fraction: float = 0.1) -> ExtremumPair:
    """
    全域最大的上升邊緣，與其後最強的下降邊緣。
    旋轉模組的投影是梯形，梯度是寬平台，峰值可能低於 module_threshold * std；
    兩者都必須至少達到 k * std。
    """
    g = grad.values
    std = float(np.std(g)) if len(g) else 0.0
    if std == 0.0:
        raise NoModuleFound("Flat profile: no edges to pair")
    hi = int(np.argmax(g))
    lo = hi + int(np.argmin(g[hi:]))
    if g[hi] < k * std or -g[lo] < k * std:
        raise NoModuleFound(
            f"Strongest edges too weak: rise {g[hi] / std:.2f}, fall {-g[lo] / std:.2f} (x std, need {k:.2f})"
        )
    pair = []
    for idx, kind in ((hi, "maximum"), (lo, "minimum")):
        left, right = peak_span(grad, idx, vanish_fraction)
        pair.append(Extremum(idx, kind, float(g[idx]), (float(left), float(right))))
    return pair[0], pair[1]


def bounding_boxes(ex_x: ExtremumPair, ex_y: ExtremumPair) -> BoundingBoxPair:
    """由兩軸 (左/上緣極大值, 右/下緣極小值) 的 span 組出外框 B1 與內框 B2。"""
    (x1, x2), (y1, y2) = ex_x, ex_y
    boxes = BoundingBoxPair(
        x_outer=(x1.span[0], x2.span[1]),
        x_inner=(x1.span[1], x2.span[0]),
        y_outer=(y1.span[0], y2.span[1]),
        y_inner=(y1.span[1], y2.span[0]),
    )
    if (
        boxes.x_inner[1] - boxes.x_inner[0] <= 0
        or boxes.y_inner[1] - boxes.y_inner[0] <= 0
        or not boxes.contains_inner()
    ):
        raise DegenerateBox(f"Inner box is empty or not nested in the outer box: x={boxes.x_inner}, y={boxes.y_inner}")
    return boxes


def _region_mean(data: np.ndarray, x0: float, x1: float, y0: float, y1: float) -> float:
    h, w = data.shape
    c0 = min(max(int(math.floor(x0)), 0), w - 1)
    c1 = min(max(int(math.ceil(x1)), c0 + 1), w)
    r0 = min(max(int(math.floor(y0)), 0), h - 1)
    r1 = min(max(int(math.ceil(y1)), r0 + 1), h)
    return float(data[r0:r1, c0:c1].mean())


def _side_contrast(a: float, b: float) -> float:
    top = max(abs(a), abs(b))
    return 0.0 if top == 0.0 else abs(a - b) / top


def disambiguate_corners(
    img: GrayImage,
    boxes: BoundingBoxPair,
    tolerance_px: float = 1.0,
    margin: float = 0.05,
) -> ModuleDetection:
    """
    外框與內框之間的環狀區域，每一邊以中點切成兩個靠近角點的半段。
    較亮的半段代表模組在該端延伸到外框，另一端則停在內框。
    span 小於 tolerance_px 的邊視為內外框重合，直接取中點。
    """
    data = img.data
    (xo0, xo1), (xi0, xi1) = boxes.x_outer, boxes.x_inner
    (yo0, yo1), (yi0, yi1) = boxes.y_outer, boxes.y_inner
    ymid, xmid = 0.5 * (yi0 + yi1), 0.5 * (xi0 + xi1)
    contrasts: Dict[str, float] = {}

    def decide(name, skew, first_region, second_region, outer, inner):
        # 回傳 (第一端座標, 第二端座標)
        if skew <= tolerance_px:
            mid = 0.5 * (outer + inner)
            return mid, mid
        a = _region_mean(data, *first_region)
        b = _region_mean(data, *second_region)
        contrasts[name] = _side_contrast(a, b)
        if contrasts[name] < margin:
            raise AmbiguousOrientation(
                f"{name} side contrast {contrasts[name]:.3f} below margin {margin:.3f}"
            )
        return (outer, inner) if a > b else (inner, outer)

    # 左邊：上半 vs 下半 -> (TL.x, BL.x)
    tl_x, bl_x = decide("left", xi0 - xo0, (xo0, xi0, yi0, ymid), (xo0, xi0, ymid, yi1), xo0, xi0)
    # 右邊 -> (TR.x, BR.x)
    tr_x, br_x = decide("right", xo1 - xi1, (xi1, xo1, yi0, ymid), (xi1, xo1, ymid, yi1), xo1, xi1)
    # 上邊：左半 vs 右半 -> (TL.y, TR.y)
    tl_y, tr_y = decide("top", yi0 - yo0, (xi0, xmid, yo0, yi0), (xmid, xi1, yo0, yi0), yo0, yi0)
    # 下邊 -> (BL.y, BR.y)
    bl_y, br_y = decide("bottom", yo1 - yi1, (xi0, xmid, yi1, yo1), (xmid, xi1, yi1, yo1), yo1, yi1)

    corners = np.array([[tl_x, tl_y], [tr_x, tr_y], [br_x, br_y], [bl_x, bl_y]], dtype=np.float64)
    if not is_convex_quad(corners):
        raise DegenerateBox("Disambiguated corners do not form a convex quadrilateral")
    logger.debug(f"Corner disambiguation contrasts: {contrasts}")
    return ModuleDetection(corners, boxes, {f"{k}_contrast": v for k, v in contrasts.items()})


def is_convex_quad(corners: np.ndarray) -> bool:
    """四點依序構成面積為正的凸四邊形 (y 向下時為順時針)。"""
    crosses = []
    for k in range(4):
        a, b, c = corners[k], corners[(k + 1) % 4], corners[(k + 2) % 4]
        crosses.append((b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]))
    crosses = np.array(crosses)
    return bool(np.all(crosses > 0))


def orient_long_side(corners: np.ndarray) -> np.ndarray:
    """讓 (b1, b2) 成為長邊；正方形時維持左上起算的順時針順序。"""
    top = np.linalg.norm(corners[1] - corners[0]) + np.linalg.norm(corners[2] - corners[3])
    side = np.linalg.norm(corners[2] - corners[1]) + np.linalg.norm(corners[3] - corners[0])
    if side > top:
        return np.roll(corners, -1, axis=0)
    return corners


class ModuleDetector:
    def __init__(self, config: Optional[DetectorConfig] = None):
        self.cfg = config or DetectorConfig()

    @staticmethod
    def _crossing(g: np.ndarray, idx: int, level: float, step: int) -> float:
        """從 idx 往 step 方向找 |g| 降到 level 的次像素位置 (線性內插)，碰到訊號端點即停。"""
        sign = np.sign(g[idx])
        k = idx
        while 0 <= k + step < len(g) and np.sign(g[k + step]) == sign and abs(g[k + step]) >= level:
            k += step
        nxt = k + step
        if not 0 <= nxt < len(g):
            return float(k)
        a = abs(g[k])
        b = abs(g[nxt]) if np.sign(g[nxt]) == sign else 0.0
        t = 0.0 if a == b else (a - level) / (a - b)
        return float(k + step * t)

    def _deblur_span(self, grad: Signal1D, ex: Extremum) -> Extremum:
        """
        扣除高斯平滑造成的峰值展寬。
        模型：寬度 s 的 box (傾斜邊的投影範圍) 與 N(0, sigma) 卷積。
        以半高寬求 s；尾端 (vanish_fraction) 對 busbar 等鄰近結構太敏感。
        s < 2 sigma 時無法與模糊區分，視為未傾斜，span 收斂到中心。
        """
        sigma, g = grad.sigma, grad.values
        level = HALF_MAXIMUM * abs(ex.value)
        left = self._crossing(g, ex.index, level, -1)
        right = self._crossing(g, ex.index, level, +1)
        center, half = 0.5 * (left + right), 0.5 * (right - left)

        s = 0.0
        if half > sigma * math.sqrt(2.0 * math.log(1.0 / HALF_MAXIMUM)):

            def excess(width):
                num = stats.norm.cdf((half + width / 2) / sigma) - stats.norm.cdf((half - width / 2) / sigma)
                den = 2.0 * stats.norm.cdf(width / (2 * sigma)) - 1.0
                return num / den - HALF_MAXIMUM

            s = optimize.brentq(excess, 1e-6 * sigma, 2.0 * half + 6.0 * sigma)
            if s < 2.0 * sigma:
                s = 0.0
        lo = min(center - s / 2, float(ex.index))
        hi = max(center + s / 2, float(ex.index))
        return Extremum(ex.index, ex.kind, ex.value, (lo, hi))

    def _axis_pair(self, profile: Signal1D, sigma: float) -> Tuple[ExtremumPair, ExtremumPair, float, bool]:
        """回傳 (原始極值對, 去模糊極值對, 峰值/標準差比, 是否走退路)。"""
        grad = SignalProcessor.smoothed_gradient(profile, sigma)
        extrema = find_extrema(grad, self.cfg.module_threshold, self.cfg.vanish_fraction)
        fallback = False
        try:
            rise, fall = select_module(extrema)
        except NoModuleFound:
            fallback = True
            rise, fall = strongest_pair(grad, self.cfg.fallback_threshold, self.cfg.vanish_fraction)
            logger.debug(f"No thresholded edge pair; using strongest edges at {rise.index} and {fall.index}")
        std = float(np.std(grad.values))
        ratio = min(abs(rise.value), abs(fall.value)) / std if std > 0 else 0.0
        return (rise, fall), (self._deblur_span(grad, rise), self._deblur_span(grad, fall)), ratio, fallback

    def _module_contrast(self, img: GrayImage, raw_x: ExtremumPair, raw_y: ExtremumPair) -> Optional[float]:
        """
        峰值位置圍出的區域平均強度相對原始外框之外背景的提升比例。
        框外像素太少時回傳 None。
        """
        data = img.data
        inside = _region_mean(data, raw_x[0].index, raw_x[1].index, raw_y[0].index, raw_y[1].index)
        c0, c1 = max(int(math.floor(raw_x[0].span[0])), 0), min(int(math.ceil(raw_x[1].span[1])) + 1, img.width)
        r0, r1 = max(int(math.floor(raw_y[0].span[0])), 0), min(int(math.ceil(raw_y[1].span[1])) + 1, img.height)
        outer_count = max(c1 - c0, 0) * max(r1 - r0, 0)
        rest = data.size - outer_count
        if rest < 0.01 * data.size:
            return None
        outside = (float(data.sum()) - float(data[r0:r1, c0:c1].sum())) / rest
        if inside <= 0.0:
            return 0.0
        return (inside - outside) / inside

    def detect(self, img: GrayImage) -> ModuleDetection:
        """
        模組粗定位：兩軸 1-D 統計 -> 平滑梯度 -> 極值 -> 選模組 -> 內外框 -> 角點。
        """
        sigma = self.cfg.sigma_factor * max(img.width, img.height)
        raw_x, ex_x, ratio_x, fallback_x = self._axis_pair(SignalProcessor.col_sum(img), sigma)
        raw_y, ex_y, ratio_y, fallback_y = self._axis_pair(SignalProcessor.row_sum(img), sigma)

        contrast = self._module_contrast(img, raw_x, raw_y)
        if contrast is not None and contrast < self.cfg.min_module_contrast:
            raise NoModuleFound(
                f"Candidate region is not brighter than the background (contrast {contrast:.3f})"
            )
        try:
            boxes = bounding_boxes(ex_x, ex_y)
            found = disambiguate_corners(
                img, boxes, tolerance_px=max(2.0, sigma), margin=self.cfg.orientation_margin
            )
        except DegenerateBox as exc:
            if fallback_x or fallback_y:
                raise NoModuleFound(f"Strongest edges do not outline a module: {exc}") from exc
            raise
        confidence = dict(found.confidence)
        confidence.update({"x_peak_ratio": ratio_x, "y_peak_ratio": ratio_y})
        if contrast is not None:
            confidence["module_contrast"] = contrast
        return ModuleDetection(orient_long_side(found.corners), boxes, confidence)


def detect_module(img: GrayImage, cfg: Optional[DetectorConfig] = None) -> ModuleDetection:
    return ModuleDetector(cfg).detect(img)
