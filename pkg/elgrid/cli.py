"""
elgrid 命令列介面。

    python -m elgrid detect --input "scans/*.png" --cols 10 --rows 6 --out results
    python -m elgrid eval --pred results --truth fixtures/annotations
    python -m elgrid bench --input "scans/*.png" --cols 10 --rows 6 --raw
    python -m elgrid synth --suite tilt-sweep --out fixtures

Exit code：0 成功，1 有影像偵測失敗，2 用法錯誤。
"""
import argparse
import glob
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

from pydantic import ValidationError

from elgrid.core.analyzer import ELGridDetector
from elgrid.core.benchmark import run_benchmark
from elgrid.core.evaluation import evaluate_records, recall_curve
from elgrid.core.scene_generator import SUITES, builtin_suite, render
from elgrid.models.config import DetectorConfig, SystemConfig
from elgrid.models.errors import ELGridError, InvalidInputError
from elgrid.storage.config_loader import ConfigLoader
from elgrid.storage.image_io import load_image, save_image, save_overlay
from elgrid.storage.result_store import (
    ResultStore,
    failure_dict,
    load_annotations,
    load_results,
    load_scene_specs,
    write_eval_csv,
    write_json,
)

logger = logging.getLogger("ELGRID")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
SEED_ENV = "EL_GRID_SEED"
IMAGE_EXTENSIONS = (".png", ".tif", ".tiff")


class UsageError(Exception):
    pass


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_detector_overrides(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("detector overrides")
    for name, info in DetectorConfig.model_fields.items():
        if name == "seed":
            continue
        group.add_argument(_flag(name), dest=f"cfg_{name}", type=info.annotation, default=None,
                           help=f"(default {info.default})")
    parser.add_argument("--seed", type=int, default=None, help=f"RANSAC seed (falls back to ${SEED_ENV})")


def _add_module_shape(parser: argparse.ArgumentParser):
    parser.add_argument("--cols", type=int, required=True, help="cells along the long side (N)")
    parser.add_argument("--rows", type=int, required=True, help="cells along the short side (M)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elgrid", description="EL module and cell-grid detector")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--config", default=None, help="YAML config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect module and cell crossings")
    p.add_argument("--input", required=True, help="image path or glob")
    _add_module_shape(p)
    p.add_argument("--out", default="results")
    p.add_argument("--overlay", action="store_true", help="write <image>_overlay.png")
    p.add_argument("--json", action="store_true", help="print results as JSON on stdout")
    p.add_argument("--cell-px", type=int, default=None, help="export rectified cells of this size")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--no-timings", action="store_true", help="omit timings for reproducible output")
    _add_detector_overrides(p)

    p = sub.add_parser("eval", help="compare results against polygon annotations")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--csv", default=None, help="default: <pred>/eval.csv")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("bench", help="timing benchmark")
    p.add_argument("--input", required=True)
    _add_module_shape(p)
    p.add_argument("--repeat", type=int, default=None)
    p.add_argument("--single-thread", action="store_true")
    p.add_argument("--raw", action="store_true", help="exclude image loading from the timings")
    p.add_argument("--json", action="store_true")
    _add_detector_overrides(p)

    p = sub.add_parser("synth", help="render synthetic fixtures with ground truth")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--suite", choices=SUITES)
    src.add_argument("--spec", help="scene spec JSON (object or list)")
    p.add_argument("--out", default="fixtures")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    return parser


def _system_config(args) -> SystemConfig:
    return ConfigLoader.load_config(args.config) if args.config else SystemConfig()


def _resolve_seed(args, fallback: int) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got '{env}'")
    return fallback


def _detector_config(args, base: DetectorConfig) -> DetectorConfig:
    data = base.model_dump()
    for name in DetectorConfig.model_fields:
        value = getattr(args, f"cfg_{name}", None)
        if value is not None:
            data[name] = value
    data["seed"] = _resolve_seed(args, base.seed)
    return DetectorConfig(**data)


def _expand_inputs(pattern: str) -> List[str]:
    if os.path.isfile(pattern):
        return [pattern]
    paths = sorted(p for p in glob.glob(pattern) if os.path.isfile(p) and p.lower().endswith(IMAGE_EXTENSIONS))
    if not paths:
        raise UsageError(f"No images match '{pattern}'")
    return paths


def _image_id(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _record_failure(store: ResultStore, image_id: str, exc: Exception) -> dict:
    data = failure_dict(image_id, exc)
    try:
        write_json(store.path_for(image_id), data)
    except OSError as write_exc:
        logger.error(f"{image_id}: cannot write failure record: {write_exc}")
    return data


def cmd_detect(args) -> int:
    system = _system_config(args)
    cfg = _detector_config(args, system.detector)
    paths = _expand_inputs(args.input)
    cell_px = args.cell_px if args.cell_px is not None else system.batch.cell_px
    overlay = args.overlay or system.batch.overlay
    threads = args.threads or system.batch.threads

    detector = ELGridDetector(cfg)
    store = ResultStore(args.out)

    def run(path: str) -> Tuple[str, dict]:
        image_id = _image_id(path)
        try:
            img = load_image(path)
            result = detector.detect(img, args.cols, args.rows)
            if cell_px:
                store.save_cells(image_id, detector.extract_cells_staged(img, result, cell_px))
            if overlay:
                save_overlay(img, result, store.path_for(image_id, "_overlay.png"))
            data = result.to_dict(image_id, include_timings=not args.no_timings)
            write_json(store.path_for(image_id), data)
            return image_id, data
        except ELGridError as exc:
            logger.error(f"{image_id}: [{exc.code}] stage={exc.stage} {exc}")
            return image_id, _record_failure(store, image_id, exc)
        except OSError as exc:
            # 寫入結果 / 疊圖 / cell 影像失敗：只記在這張影像，批次繼續
            logger.error(f"{image_id}: I/O failure {exc}")
            return image_id, _record_failure(store, image_id, exc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, paths))
    else:
        outcomes = [run(p) for p in paths]

    ok = [d for _, d in outcomes if d["status"] == "ok"]
    failed = [i for i, d in outcomes if d["status"] != "ok"]
    if args.json:
        print(json.dumps([d for _, d in outcomes], indent=2))
    times = [d["timings_ms"]["total"] for d in ok if "timings_ms" in d]
    mean_ms = f", mean {sum(times) / len(times):.1f} ms per image" if times else ""
    print(f"Processed {len(outcomes)} images: {len(ok)} ok, {len(failed)} failed{mean_ms}")
    for image_id in failed:
        print(f"  FAILED {image_id}")
    return EXIT_OK if not failed else EXIT_FAILED


def cmd_eval(args) -> int:
    try:
        records = evaluate_records(load_results(args.pred), load_annotations(args.truth))
        curve = recall_curve(records)
    except ELGridError as exc:
        print(f"Evaluation failed: [{exc.code}] {exc}", file=sys.stderr)
        return EXIT_FAILED

    csv_path = args.csv or os.path.join(args.pred, "eval.csv")
    write_eval_csv(csv_path, records)
    if args.json:
        print(json.dumps({"records": {r.image_id: r.iou for r in records}, **curve.to_dict()}, indent=2))
        return EXIT_OK
    for r in records:
        print(f"{r.image_id:<32} IoU {r.iou:.4f}{'' if r.detected is not None else '  (miss)'}")
    for t, v in curve.recall_at.items():
        print(f"recall@{t:.1f} = {v:.4f}")
    print(f"AUC = {curve.auc:.4f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    system = _system_config(args)
    cfg = _detector_config(args, system.detector)
    if args.single_thread:
        cfg = DetectorConfig(**{**cfg.model_dump(), "patch_workers": 1})
    paths = _expand_inputs(args.input)
    repeat = args.repeat or system.batch.repeat
    sources = [(_image_id(p), (lambda p=p: load_image(p))) for p in paths]

    report = run_benchmark(sources, args.cols, args.rows, ELGridDetector(cfg), repeat=repeat, raw=args.raw)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(f"Images: {report.images} (failed {report.failures}), repeat {report.repeat}, raw={report.raw}")
        for stage, ms in report.stage_ms.items():
            print(f"  {stage:<8} {ms:9.2f} ms")
        if report.total_std_ms is not None:
            print(f"  std(total) {report.total_std_ms:.2f} ms")
        verdict = "within" if report.within_budget else "OVER"
        print(f"Mean per image {report.mean_total_ms:.1f} ms ({verdict} the 500 ms budget); "
              f"module stage share {report.module_share:.0%}")
    return EXIT_OK if report.failures == 0 and report.images > 0 else EXIT_FAILED


def cmd_synth(args) -> int:
    seed = _resolve_seed(args, 0)
    try:
        if args.suite:
            scenes = builtin_suite(args.suite, seed=seed, count=args.count)
        else:
            specs = load_scene_specs(args.spec)
            scenes = [(f"scene_{k:03d}", s) for k, s in enumerate(specs)]
        folders = {k: os.path.join(args.out, k) for k in ("images", "annotations", "truth")}
        for folder in folders.values():
            os.makedirs(folder, exist_ok=True)
        for k, (scene_id, spec) in enumerate(scenes):
            img, truth = render(spec, seed=seed + k)
            save_image(img, os.path.join(folders["images"], f"{scene_id}.png"))
            write_json(os.path.join(folders["annotations"], f"{scene_id}.json"), truth.annotation())
            write_json(
                os.path.join(folders["truth"], f"{scene_id}.json"),
                {"image": scene_id, "seed": seed + k, "spec": spec.model_dump(), **truth.to_dict()},
            )
    except ELGridError as exc:
        print(f"Synthesis failed: [{exc.code}] {exc}", file=sys.stderr)
        return EXIT_FAILED
    print(f"Wrote {len(scenes)} scenes to {args.out}")
    return EXIT_OK


COMMANDS = {"detect": cmd_detect, "eval": cmd_eval, "bench": cmd_bench, "synth": cmd_synth}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE

    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValidationError, FileNotFoundError, InvalidInputError) as exc:
        print(f"elgrid {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
