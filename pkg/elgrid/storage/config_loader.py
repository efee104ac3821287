import logging
import os

import yaml

from elgrid.models.config import SystemConfig
from elgrid.models.errors import InvalidInputError

logger = logging.getLogger("ELGRID")


class ConfigLoader:
    @staticmethod
    def load_config(path: str) -> SystemConfig:
        """讀取偵測器 YAML：`detector` (偵測參數) 與 `batch` (CLI 批次設定)，缺的段落用預設值。"""
        if not os.path.exists(path):
            raise FileNotFoundError(f"Detector config not found: {path}")

        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise InvalidInputError(f"Detector config {path} must be a mapping of sections, got {type(data).__name__}")

        unknown = sorted(set(data) - set(SystemConfig.model_fields))
        if unknown:
            logger.warning(f"Ignoring unknown config sections in {path}: {', '.join(unknown)}")
            data = {k: v for k, v in data.items() if k in SystemConfig.model_fields}

        # 門檻與 RANSAC 參數的範圍由 pydantic 檢查
        config = SystemConfig(**data)
        logger.debug(f"Loaded detector config from {path}: seed={config.detector.seed}, patch_px={config.detector.patch_px}")
        return config

    @staticmethod
    def save_config(config: SystemConfig, path: str):
        folder = os.path.dirname(path)
        if folder:
            os.makedirs(folder, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(config.model_dump(), f, sort_keys=False)
