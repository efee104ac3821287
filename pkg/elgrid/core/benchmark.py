import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from elgrid.core.analyzer import ELGridDetector
from elgrid.models.errors import ELGridError
from elgrid.models.image import GrayImage

logger = logging.getLogger("ELGRID")

BUDGET_MS = 500.0
MODULE_SHARE_LIMIT = 0.2
STAGES = ("load", "module", "patches", "ransac", "total")

ImageSource = Tuple[str, Callable[[], GrayImage]]


@dataclass
class BenchmarkReport:
    images: int
    failures: int
    repeat: int
    raw: bool
    stage_ms: Dict[str, float]               # 各影像 median 的平均
    total_std_ms: Optional[float]            # repeat == 1 時不報
    per_image_ms: Dict[str, float] = field(default_factory=dict)

    @property
    def mean_total_ms(self) -> float:
        return self.stage_ms.get("total", 0.0)

    @property
    def module_share(self) -> float:
        total = self.stage_ms.get("total", 0.0) - self.stage_ms.get("load", 0.0)
        return 0.0 if total <= 0 else self.stage_ms.get("module", 0.0) / total

    @property
    def within_budget(self) -> bool:
        return self.images > 0 and self.mean_total_ms <= BUDGET_MS

    def to_dict(self):
        return {
            "images": self.images,
            "failures": self.failures,
            "repeat": self.repeat,
            "raw": self.raw,
            "stage_ms": self.stage_ms,
            "total_std_ms": self.total_std_ms,
            "mean_total_ms": self.mean_total_ms,
            "budget_ms": BUDGET_MS,
            "within_budget": self.within_budget,
            "module_share": self.module_share,
            "module_share_ok": self.module_share <= MODULE_SHARE_LIMIT,
            "per_image_ms": self.per_image_ms,
        }


def run_benchmark(
    sources: Sequence[ImageSource],
    cols: int,
    rows: int,
    detector: Optional[ELGridDetector] = None,
    repeat: int = 5,
    raw: bool = True,
) -> BenchmarkReport:
    """
    每張影像重複 repeat 次取各階段 median。
    raw=True 時影像只讀一次且不計入時間 (純處理時間)。
    """
    detector = detector or ELGridDetector()
    medians: List[Dict[str, float]] = []
    spreads: List[float] = []
    per_image: Dict[str, float] = {}
    failures = 0

    for image_id, load in sources:
        preloaded = load() if raw else None
        runs: Dict[str, List[float]] = {k: [] for k in STAGES}
        try:
            for _ in range(repeat):
                start = time.perf_counter()
                img = preloaded if raw else load()
                load_ms = 0.0 if raw else (time.perf_counter() - start) * 1000.0
                result = detector.detect(img, cols, rows)
                runs["load"].append(load_ms)
                for k in ("module", "patches", "ransac"):
                    runs[k].append(result.timings_ms[k])
                runs["total"].append(load_ms + result.timings_ms["total"])
        except ELGridError as exc:
            failures += 1
            logger.error(f"Benchmark image {image_id} failed [{exc.code}] {exc}")
            continue
        med = {k: float(np.median(v)) for k, v in runs.items()}
        medians.append(med)
        per_image[image_id] = med["total"]
        if repeat > 1:
            spreads.append(float(np.std(runs["total"])))

    stage_ms = {k: float(np.mean([m[k] for m in medians])) for k in STAGES} if medians else {}
    total_std = float(np.mean(spreads)) if spreads else None
    logger.info(f"Benchmark: {len(medians)} images, mean {stage_ms.get('total', 0.0):.1f} ms per image")
    return BenchmarkReport(len(medians), failures, repeat, raw, stage_ms, total_std, per_image)
