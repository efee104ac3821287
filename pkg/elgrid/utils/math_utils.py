import math

import numpy as np
from scipy import ndimage

from elgrid.models.errors import InvalidInputError
from elgrid.models.image import GrayImage, Signal1D


class SignalProcessor:
    @staticmethod
    def row_sum(img: GrayImage) -> Signal1D:
        """
        每一列 (固定 y) 的強度總和，長度 = h，是 y 的函數。
        不做平均：後續只用極值位置與相對門檻，對正比例縮放不變。
        """
        values = img.data.sum(axis=1)
        return Signal1D(values, "y", (img.width, img.height))

    @staticmethod
    def col_sum(img: GrayImage) -> Signal1D:
        """每一行 (固定 x) 的強度總和，長度 = w，是 x 的函數。"""
        values = img.data.sum(axis=0)
        return Signal1D(values, "x", (img.width, img.height))

    @staticmethod
    def kernel_radius(sigma: float) -> int:
        return int(math.ceil(3.0 * sigma))

    @staticmethod
    def smoothed_gradient(sig: Signal1D, sigma: float) -> Signal1D:
        """
        高斯平滑後的一階導數，以 derivative-of-Gaussian 單次卷積實作。
        kernel 半徑 ceil(3 sigma)，邊界用 edge replication (mode='nearest')。
        """
        if sigma <= 0:
            raise InvalidInputError(f"sigma must be positive, got {sigma}")
        if len(sig) < 3:
            raise InvalidInputError(f"Signal too short for a gradient: {len(sig)} samples")
        grad = ndimage.gaussian_filter1d(
            sig.values,
            sigma,
            order=1,
            mode="nearest",
            radius=SignalProcessor.kernel_radius(sigma),
        )
        return Signal1D(grad, sig.axis, sig.source_shape, sigma)

    @staticmethod
    def sample_points(img: GrayImage, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """
        向量化雙線性取樣。超出影像的座標夾到邊界 (edge-clamped)。
        order=1 的 map_coordinates 即為標準雙線性內插。
        """
        xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, img.width - 1)
        ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, img.height - 1)
        coords = np.stack([ys.ravel(), xs.ravel()])
        out = ndimage.map_coordinates(img.data, coords, order=1, mode="nearest", prefilter=False)
        return out.reshape(xs.shape)

    @staticmethod
    def bilinear_sample(img: GrayImage, u: float, v: float) -> float:
        """單點雙線性取樣：u 為 x (行)，v 為 y (列)。"""
        return float(SignalProcessor.sample_points(img, np.array([u]), np.array([v]))[0])

    @staticmethod
    def zero_crossing(values: np.ndarray, start: int, stop: int) -> float:
        """
        在 [start, stop] 之間找第一個由負轉正的零交越點，線性內插到次像素。
        找不到時回傳 NaN。
        """
        seg = values[start:stop + 1]
        for k in range(len(seg) - 1):
            a, b = seg[k], seg[k + 1]
            if a == 0.0:
                return float(start + k)
            if a < 0.0 < b:
                return float(start + k + (-a) / (b - a))
        if len(seg) and seg[-1] == 0.0:
            return float(stop)
        return float("nan")
