import logging
import math
from dataclasses import replace
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from elgrid.models.config import DetectorConfig
from elgrid.models.errors import DegenerateConfiguration, InsufficientConsensus
from elgrid.models.geometry import Correspondence, Homography
from elgrid.utils.geometry import (
    RANK_TOL,
    correspondence_arrays,
    design_matrix,
    dlt_arrays,
    has_collinear_triple,
    hartley_normalization,
    reprojection_error_arrays,
    squared_residuals,
    to_homogeneous,
)

logger = logging.getLogger("ELGRID")

CHUNK = 250  # 每批假設數；early exit 在批次之間檢查


class RansacResult(NamedTuple):
    homography: Homography
    inliers: np.ndarray
    error: float
    hypotheses: int = 0
    # ransac_refit 回傳的對應點副本，inlier 旗標已依最終共識設定
    correspondences: Tuple[Correspondence, ...] = ()


def _hypotheses(model, image, t_src, t_dst, idx):
    """
    批次 DLT：對 idx (k, 4) 的每組最小樣本解出 H。
    回傳 (H (k,3,3), 有效旗標 (k,))。
    """
    src = (to_homogeneous(model) @ t_src.T)[:, :2]
    dst = (to_homogeneous(image) @ t_dst.T)[:, :2]
    a = design_matrix(src[idx], dst[idx])  # (k, 8, 9)
    _, s, vt = np.linalg.svd(a)
    h_norm = vt[:, -1, :].reshape(-1, 3, 3)
    h = np.linalg.inv(t_dst) @ h_norm @ t_src

    valid = s[:, 7] >= RANK_TOL * s[:, 0]
    valid &= ~has_collinear_triple(model[idx])
    return h, valid


def ransac_fit_arrays(
    model: np.ndarray,
    image: np.ndarray,
    cols: int,
    rows: int,
    cell_px: float,
    cfg: DetectorConfig,
) -> RansacResult:
    model = np.asarray(model, dtype=np.float64).reshape(-1, 2)
    image = np.asarray(image, dtype=np.float64).reshape(-1, 2)
    n = len(model)
    if n < 4:
        raise InsufficientConsensus(f"RANSAC needs at least 4 correspondences, got {n}")

    threshold = cfg.inlier_fraction * cell_px
    required = max(cfg.min_consensus, int(math.ceil(cfg.min_inlier_fraction * n)))
    # 共識不可能多於格點總數 (1x1 模組只有 4 點)
    required = min(required, (cols + 1) * (rows + 1))
    rng = np.random.default_rng(cfg.seed)

    t_src = hartley_normalization(model)
    t_dst = hartley_normalization(image)
    model_h = to_homogeneous(model)

    best_count = 0
    best_mask = np.zeros(n, dtype=bool)
    done = 0
    while done < cfg.ransac_iterations:
        k = min(CHUNK, cfg.ransac_iterations - done)
        # 每列隨機排列取前 4 個 => 不重複的最小樣本
        idx = np.argsort(rng.random((k, n)), axis=1)[:, :4]
        h, valid = _hypotheses(model, image, t_src, t_dst, idx)

        proj = np.einsum("kab,nb->kna", h, model_h)  # (k, n, 3)
        w = proj[..., 2]
        sample_w = np.take_along_axis(w, idx, axis=1)
        # 最小樣本的齊次尺度必須同號，否則 H 把模組翻折
        sign = np.sign(sample_w[:, :1])
        valid &= np.all(np.sign(sample_w) == sign, axis=1) & (sign[:, 0] != 0)

        with np.errstate(divide="ignore", invalid="ignore"):
            xy = proj[..., :2] / w[..., None]
            dist = np.linalg.norm(xy - image[None], axis=2)
        inl = (dist <= threshold) & (np.sign(w) == sign)
        counts = np.where(valid, inl.sum(axis=1), -1)

        best = int(np.argmax(counts))
        if counts[best] > best_count:
            best_count = int(counts[best])
            best_mask = inl[best].copy()
        done += k
        if best_count > cfg.early_exit_fraction * n:
            break

    logger.debug(f"RANSAC consensus {best_count}/{n} after {done} hypotheses (threshold {threshold:.3f}px)")
    if best_count < required:
        raise InsufficientConsensus(f"Best consensus {best_count}/{n} below required {required}")

    try:
        h = dlt_arrays(model[best_mask], image[best_mask])
        flags = squared_residuals(h, model, image) <= threshold ** 2
        if not np.array_equal(flags, best_mask) and flags.sum() >= required:
            h = dlt_arrays(model[flags], image[flags])
            flags = squared_residuals(h, model, image) <= threshold ** 2
    except DegenerateConfiguration as exc:
        raise InsufficientConsensus(f"Consensus set is degenerate: {exc}") from exc

    if flags.sum() < required:
        raise InsufficientConsensus(f"Refit consensus {int(flags.sum())}/{n} below required {required}")
    outside = int(np.sum(best_mask & ~flags))
    if outside:
        logger.debug(f"{outside} consensus points exceed the threshold under the refit homography")

    error = reprojection_error_arrays(h, model[flags], image[flags], cols, rows)
    return RansacResult(h, flags, error, done)


def ransac_refit(
    correspondences: Sequence[Correspondence],
    cols: int,
    rows: int,
    cell_px: float,
    cfg: DetectorConfig,
) -> RansacResult:
    """
    以 RANSAC 剔除離群的格點偵測，最後以共識集合重新 DLT。
    離群判定：偵測點與 H_t 投影點距離 > inlier_fraction * cell_px。
    """
    model, image = correspondence_arrays(correspondences)
    fit = ransac_fit_arrays(model, image, cols, rows, cell_px, cfg)
    flagged = tuple(replace(c, inlier=bool(f)) for c, f in zip(correspondences, fit.inliers))
    return fit._replace(correspondences=flagged)
