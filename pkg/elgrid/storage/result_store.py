import csv
import glob
import json
import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from elgrid.models.errors import ELGridError, InvalidInputError, SceneError
from elgrid.models.results import SCHEMA_VERSION, DetectionResult, EvalRecord, RectifiedCell
from elgrid.models.scene import SceneSpec
from elgrid.storage.image_io import save_image

logger = logging.getLogger("ELGRID")


def safe_id(image_id: str) -> str:
    # 確保檔名安全，避免路徑遍歷
    return "".join(c for c in image_id if c.isalnum() or c in ("-", "_", ".")).lstrip(".") or "image"


def write_json(path: str, data: Any):
    """
    Atomic Write：先寫暫存檔，成功後才以 os.replace 覆蓋。
    """
    tmp_path = path + ".tmp"
    try:
        with open(tmp_path, "w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False, indent=2)
        os.replace(tmp_path, path)
    except Exception as e:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise IOError(f"Failed to write {path}: {e}")


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def failure_dict(image_id: str, error: Exception) -> Dict[str, Any]:
    if isinstance(error, ELGridError):
        detail = error.to_dict()
    else:
        detail = {"code": "E90", "stage": None, "message": str(error)}
    return {"schema_version": SCHEMA_VERSION, "image": image_id, "status": "failed", "error": detail}


class ResultStore:
    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(self.out_dir, exist_ok=True)

    def path_for(self, image_id: str, suffix: str = ".json") -> str:
        return os.path.join(self.out_dir, f"{safe_id(image_id)}{suffix}")

    def save_result(self, image_id: str, result: DetectionResult, include_timings: bool = True) -> str:
        path = self.path_for(image_id)
        write_json(path, result.to_dict(image_id, include_timings=include_timings))
        return path

    def save_failure(self, image_id: str, error: Exception) -> str:
        path = self.path_for(image_id)
        write_json(path, failure_dict(image_id, error))
        return path

    def save_cells(self, image_id: str, cells: List[RectifiedCell]) -> str:
        folder = os.path.join(self.out_dir, f"{safe_id(image_id)}_cells")
        os.makedirs(folder, exist_ok=True)
        for cell in cells:
            save_image(cell.image, os.path.join(folder, f"cell_{cell.i}_{cell.j}.png"))
        return folder


def _json_files(folder: str) -> List[str]:
    if not os.path.isdir(folder):
        raise InvalidInputError(f"Not a directory: {folder}")
    return sorted(p for p in glob.glob(os.path.join(folder, "*.json")))


def load_results(pred_dir: str) -> Dict[str, Optional[np.ndarray]]:
    """讀取偵測結果目錄：成功者回傳角點，失敗者為 None。"""
    out: Dict[str, Optional[np.ndarray]] = {}
    for path in _json_files(pred_dir):
        data = read_json(path)
        image_id = data.get("image") or os.path.splitext(os.path.basename(path))[0]
        out[image_id] = np.asarray(data["corners"], dtype=np.float64) if data.get("status") == "ok" else None
    if not out:
        raise InvalidInputError(f"No result files in {pred_dir}")
    return out


def load_annotations(truth_dir: str) -> Dict[str, np.ndarray]:
    """標註格式：每張影像一個 {"polygon": [[x, y], ...]}，檔名即影像 id。"""
    out = {}
    for path in _json_files(truth_dir):
        image_id = os.path.splitext(os.path.basename(path))[0]
        out[image_id] = np.asarray(read_json(path)["polygon"], dtype=np.float64)
    if not out:
        raise InvalidInputError(f"No annotation files in {truth_dir}")
    return out


def write_eval_csv(path: str, records: List[EvalRecord]):
    tmp_path = path + ".tmp"
    with open(tmp_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image", "iou", "detected"])
        for r in records:
            writer.writerow([r.image_id, f"{r.iou:.6f}", int(r.detected is not None)])
    os.replace(tmp_path, path)


def load_scene_specs(path: str) -> List[SceneSpec]:
    """場景描述 JSON：單一物件或物件陣列。"""
    data = read_json(path)
    items = data if isinstance(data, list) else [data]
    try:
        return [SceneSpec(**item) for item in items]
    except (ValidationError, TypeError) as exc:
        raise SceneError(f"Invalid scene spec in {path}: {exc}") from exc
