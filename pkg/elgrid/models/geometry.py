from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from elgrid.models.errors import DegenerateConfiguration

Point = Tuple[float, float]


@dataclass(frozen=True)
class ModelGrid:
    """
    模組的理想格點 (cell 單位)。原點在左上角，y 軸向下。
    points 依列優先排序：index = j * (N + 1) + i。
    """
    cols: int  # N
    rows: int  # M
    points: np.ndarray  # ((N+1)(M+1), 2)

    @property
    def indices(self) -> List[Tuple[int, int]]:
        return [(i, j) for j in range(self.rows + 1) for i in range(self.cols + 1)]

    @property
    def corners(self) -> np.ndarray:
        n, m = self.cols, self.rows
        return np.array([[0.0, 0.0], [n, 0.0], [n, m], [0.0, m]])

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Homography:
    """
    3x3 射影轉換 (model -> image)。
    建立時正規化：Frobenius norm = 1 且 h[2,2] >= 0，方便重現序列化結果。
    """
    matrix: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(h)):
            raise DegenerateConfiguration("Homography contains non-finite entries")
        norm = np.linalg.norm(h)
        if norm == 0.0:
            raise DegenerateConfiguration("Zero homography matrix")
        h = h / norm
        if h[2, 2] < 0 or (h[2, 2] == 0 and h.flat[np.flatnonzero(h)[0]] < 0):
            h = -h
        if abs(np.linalg.det(h)) < 1e-14:
            raise DegenerateConfiguration("Homography is singular")
        h.flags.writeable = False
        object.__setattr__(self, "matrix", h)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def to_list(self) -> List[float]:
        return [float(v) for v in self.matrix.ravel()]

    @classmethod
    def from_list(cls, values) -> "Homography":
        return cls(np.asarray(values, dtype=np.float64).reshape(3, 3))

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))


@dataclass(frozen=True)
class Correspondence:
    model: Point
    image: Point
    inlier: bool = False
