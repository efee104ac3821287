from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from elgrid.models.geometry import Homography


class SceneSpec(BaseModel):
    """合成 EL 場景的描述，亮度皆為 [0, 1] 的正規化強度。"""

    cols: int = Field(10, ge=1)
    rows: int = Field(6, ge=1)
    width: int = Field(1000, ge=16)
    height: int = Field(800, ge=16)

    # 直接指定 H_true (9 個數，列優先)；未指定時由 tilt / roll 產生
    homography: Optional[List[float]] = None
    tilt_deg: float = 0.0
    roll_deg: float = 0.0
    focal: float = Field(4.0, gt=0)
    fill: float = Field(0.6, gt=0, le=1)
    shift: Tuple[float, float] = (0.0, 0.0)

    cell_mean: float = Field(0.75, gt=0, le=1)
    cell_jitter: float = Field(0.03, ge=0)
    ridge_width: float = Field(0.04, gt=0, lt=0.5)
    ridge_level: float = Field(0.2, ge=0, le=1)
    busbar_count: int = Field(2, ge=0)
    busbar_width: float = Field(0.03, gt=0, lt=0.5)
    busbar_level: float = Field(0.3, ge=0, le=1)
    busbar_orientation: Literal["vertical", "horizontal", "both"] = "vertical"
    background: float = Field(0.05, ge=0, le=1)
    noise_sigma: float = Field(0.0, ge=0)

    # 相鄰模組的位移 (model 單位)，通常只部分可見
    neighbor_offsets: List[Tuple[float, float]] = Field(default_factory=list)

    @field_validator("homography")
    @classmethod
    def _nine_entries(cls, v):
        if v is not None and len(v) != 9:
            raise ValueError("homography must have 9 entries")
        return v

    @model_validator(mode="after")
    def _check_ordering(self):
        if self.cols < self.rows:
            raise ValueError("cols (long side) must be >= rows")
        if not self.background < self.ridge_level < self.cell_mean:
            raise ValueError("Expected background < ridge_level < cell_mean")
        if not self.background < self.busbar_level < self.cell_mean:
            raise ValueError("Expected background < busbar_level < cell_mean")
        return self


@dataclass(frozen=True)
class SceneTruth:
    homography: Homography
    corners: np.ndarray   # (4, 2)，對應 (0,0), (N,0), (N,M), (0,M)
    lattice: np.ndarray   # ((N+1)(M+1), 2)，列優先
    neighbor_corners: List[np.ndarray] = field(default_factory=list)

    def to_dict(self):
        return {
            "h": self.homography.to_list(),
            "corners": self.corners.tolist(),
            "lattice": self.lattice.tolist(),
            "neighbors": [c.tolist() for c in self.neighbor_corners],
        }

    def annotation(self):
        """與 eval 相容的標註格式。"""
        return {"polygon": self.corners.tolist()}
