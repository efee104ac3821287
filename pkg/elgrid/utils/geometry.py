from typing import Sequence, Tuple

import numpy as np

from elgrid.models.errors import DegenerateConfiguration, InvalidInputError, PointAtInfinity
from elgrid.models.geometry import Correspondence, Homography, ModelGrid

AT_INFINITY_TOL = 1e-12
RANK_TOL = 1e-10


def model_grid(cols: int, rows: int) -> ModelGrid:
    """
    建立 (N+1)(M+1) 的格點，cell 邊長 = 1。
    以 N >= M 為前提 (長邊為 N)。
    """
    if rows < 1 or cols < rows:
        raise InvalidInputError(f"Model grid requires N >= M >= 1, got N={cols}, M={rows}")
    i, j = np.meshgrid(np.arange(cols + 1), np.arange(rows + 1))
    points = np.stack([i.ravel(), j.ravel()], axis=1).astype(np.float64)
    points.flags.writeable = False
    return ModelGrid(cols, rows, points)


def to_homogeneous(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return np.hstack([points, np.ones((len(points), 1))])


def project_points(h: Homography, points) -> np.ndarray:
    """批次投影 model 點到影像座標，任何點落在無窮遠即丟出 PointAtInfinity。"""
    ph = to_homogeneous(points) @ h.matrix.T
    w = ph[:, 2]
    scale = np.linalg.norm(ph, axis=1)
    if np.any(np.abs(w) < AT_INFINITY_TOL * np.maximum(scale, 1e-300)):
        raise PointAtInfinity("Projected point lies at infinity")
    return ph[:, :2] / w[:, None]


def project(h: Homography, m) -> np.ndarray:
    return project_points(h, np.asarray(m, dtype=np.float64).reshape(1, 2))[0]


def hartley_normalization(points: np.ndarray) -> np.ndarray:
    """
    等向正規化：質心移到原點、平均距離縮放為 sqrt(2)。
    回傳 3x3 轉換矩陣 T。
    """
    centroid = points.mean(axis=0)
    mean_dist = np.linalg.norm(points - centroid, axis=1).mean()
    if not np.isfinite(mean_dist) or mean_dist < 1e-12:
        raise DegenerateConfiguration("Points coincide; cannot normalize")
    s = np.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def design_matrix(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """
    DLT 的設計矩陣，每組對應兩列。支援批次：src/dst 形狀 (..., n, 2)，回傳 (..., 2n, 9)。
    """
    x, y = src[..., 0], src[..., 1]
    u, v = dst[..., 0], dst[..., 1]
    zeros, ones = np.zeros_like(x), np.ones_like(x)
    row_u = np.stack([-x, -y, -ones, zeros, zeros, zeros, u * x, u * y, u], axis=-1)
    row_v = np.stack([zeros, zeros, zeros, -x, -y, -ones, v * x, v * y, v], axis=-1)
    rows = np.stack([row_u, row_v], axis=-2)  # (..., n, 2, 9)
    return rows.reshape(*rows.shape[:-3], -1, 9)


def has_collinear_triple(points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """
    4 點中是否有任三點共線。points 形狀 (..., 4, 2)。
    以三角形面積相對於點集尺度判斷。
    """
    scale = np.ptp(points, axis=-2).max(axis=-1) ** 2 + 1e-300
    flags = np.zeros(points.shape[:-2], dtype=bool)
    for a, b, c in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        pa, pb, pc = points[..., a, :], points[..., b, :], points[..., c, :]
        area = (pb[..., 0] - pa[..., 0]) * (pc[..., 1] - pa[..., 1]) - (
            pb[..., 1] - pa[..., 1]
        ) * (pc[..., 0] - pa[..., 0])
        flags |= np.abs(area) < tol * scale
    return flags


def dlt_arrays(model: np.ndarray, image: np.ndarray) -> Homography:
    model = np.asarray(model, dtype=np.float64).reshape(-1, 2)
    image = np.asarray(image, dtype=np.float64).reshape(-1, 2)
    if len(model) < 4 or len(model) != len(image):
        raise DegenerateConfiguration(f"DLT needs at least 4 matched points, got {len(model)}")
    if len(model) == 4 and has_collinear_triple(model):
        raise DegenerateConfiguration("Three of the four model points are collinear")

    t_src = hartley_normalization(model)
    t_dst = hartley_normalization(image)
    src = to_homogeneous(model) @ t_src.T
    dst = to_homogeneous(image) @ t_dst.T

    a = design_matrix(src[:, :2], dst[:, :2])
    _, s, vt = np.linalg.svd(a)
    if s[7] < RANK_TOL * s[0]:
        raise DegenerateConfiguration("Design matrix is rank deficient")
    h_norm = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(t_dst) @ h_norm @ t_src)


def dlt(correspondences: Sequence[Correspondence]) -> Homography:
    """
    Direct linear transform：Hartley 正規化後以 SVD 求最小平方代數解。
    """
    model, image = correspondence_arrays(correspondences)
    return dlt_arrays(model, image)


def correspondence_arrays(correspondences: Sequence[Correspondence]) -> Tuple[np.ndarray, np.ndarray]:
    model = np.array([c.model for c in correspondences], dtype=np.float64).reshape(-1, 2)
    image = np.array([c.image for c in correspondences], dtype=np.float64).reshape(-1, 2)
    return model, image


def squared_residuals(h: Homography, model: np.ndarray, image: np.ndarray) -> np.ndarray:
    ph = to_homogeneous(model) @ h.matrix.T
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = ph[:, :2] / ph[:, 2:3]
    d2 = np.sum((proj - image) ** 2, axis=1)
    return np.where(np.isfinite(d2), d2, np.inf)


def reprojection_error_arrays(h: Homography, model, image, cols: int, rows: int) -> float:
    model = np.asarray(model, dtype=np.float64).reshape(-1, 2)
    image = np.asarray(image, dtype=np.float64).reshape(-1, 2)
    if len(model) == 0:
        raise InvalidInputError("Reprojection error needs at least one correspondence")
    # 依公式除以 cell 數 N*M，而非點數
    return float(squared_residuals(h, model, image).sum() / (cols * rows))


def reprojection_error(h: Homography, correspondences: Sequence[Correspondence], cols: int, rows: int) -> float:
    model, image = correspondence_arrays(correspondences)
    return reprojection_error_arrays(h, model, image, cols, rows)
