from pydantic import BaseModel, Field


class DetectorConfig(BaseModel):
    # 1-D 統計量的平滑：sigma = sigma_factor * max(w, h)
    sigma_factor: float = Field(0.01, gt=0)
    # 極值門檻 (倍數 * 梯度標準差)
    module_threshold: float = Field(2.0, gt=0)
    # 門檻內找不到 (極大, 極小) 配對時，最強邊緣仍需達到的倍數
    fallback_threshold: float = Field(1.0, gt=0)
    patch_threshold: float = Field(1.5, gt=0)
    # 峰值「消失」的比例 (相對峰值絕對值)
    vanish_fraction: float = Field(0.1, gt=0, lt=1)
    # 角點方向判定的最小相對對比
    orientation_margin: float = Field(0.05, gt=0, lt=1)
    # 模組內外平均強度的最小相對差
    min_module_contrast: float = Field(0.1, gt=0, lt=1)
    # RANSAC：離群判定 = inlier_fraction * cell size
    inlier_fraction: float = Field(0.05, gt=0)
    ransac_iterations: int = Field(2000, gt=0)
    early_exit_fraction: float = Field(0.9, gt=0, le=1)
    min_inlier_fraction: float = Field(0.25, gt=0, le=1)
    min_consensus: int = Field(5, ge=4)
    # 校正後 patch 的邊長 (像素)
    patch_px: int = Field(64, ge=8)
    max_clamped_fraction: float = Field(0.5, gt=0, le=1)
    patch_workers: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)


class BatchConfig(BaseModel):
    threads: int = Field(1, ge=1)
    repeat: int = Field(5, ge=1)
    cell_px: int = Field(0, ge=0)  # 0 = 不輸出 cell 影像
    overlay: bool = False


class SystemConfig(BaseModel):
    detector: DetectorConfig = DetectorConfig()
    batch: BatchConfig = BatchConfig()
