from dataclasses import dataclass, field
from typing import Literal, Optional, Tuple

import numpy as np

from elgrid.models.errors import ImageFormatError, InvalidInputError

Axis = Literal["x", "y"]


@dataclass(frozen=True)
class GrayImage:
    """
    EL 量測影像，強度正規化到 [0, 1]。
    儲存慣例：data[y, x]，y 為列 (向下)，x 為行 (向右)，座標從 0 開始。
    整數座標代表像素中心。
    """
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ImageFormatError(f"Expected a 2-D intensity array, got shape {self.data.shape}")
        if self.data.shape[0] == 0 or self.data.shape[1] == 0:
            raise ImageFormatError(f"Zero-area image: {self.data.shape}")
        if self.data.shape[0] < 2 or self.data.shape[1] < 2:
            raise ImageFormatError(f"Image must be at least 2x2, got {self.data.shape}")

    @classmethod
    def from_array(cls, array, validate: bool = True, copy: bool = True) -> "GrayImage":
        # copy=False 只給內部剛建立、不會再被修改的陣列使用
        data = np.array(array, dtype=np.float64) if copy else np.asarray(array, dtype=np.float64)
        if validate and data.size:
            if not np.all(np.isfinite(data)):
                raise ImageFormatError("Image contains non-finite intensities")
            if data.min() < 0.0 or data.max() > 1.0:
                raise ImageFormatError("Intensities must lie within [0, 1]")
        data.flags.writeable = False
        return cls(data)

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    def scaled(self, factor: float) -> "GrayImage":
        return GrayImage.from_array(np.clip(self.data * factor, 0.0, 1.0))


@dataclass(frozen=True)
class Signal1D:
    """
    1-D 統計量 (累加強度或其平滑梯度)。
    axis="x" 代表沿 x 方向的函數 (長度 = 影像寬度)，axis="y" 則長度 = 影像高度。
    sigma 只有平滑梯度才會設定，用於非極大值抑制的視窗半徑。
    """
    values: np.ndarray
    axis: Axis
    source_shape: Tuple[int, int]  # (width, height)
    sigma: Optional[float] = field(default=None)

    def __post_init__(self):
        if self.values.ndim != 1:
            raise InvalidInputError("Signal1D values must be one-dimensional")
        expected = self.source_shape[0] if self.axis == "x" else self.source_shape[1]
        if len(self.values) != expected:
            raise InvalidInputError(
                f"Signal length {len(self.values)} does not match source dimension {expected}"
            )

    @classmethod
    def from_values(cls, values, axis: Axis = "x", sigma: Optional[float] = None) -> "Signal1D":
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("Signal contains non-finite values")
        shape = (len(arr), 1) if axis == "x" else (1, len(arr))
        return cls(arr, axis, shape, sigma)

    def __len__(self) -> int:
        return len(self.values)

    def reversed(self) -> "Signal1D":
        return Signal1D(self.values[::-1].copy(), self.axis, self.source_shape, self.sigma)
