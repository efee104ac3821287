import logging
import os
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

from elgrid.models.errors import ImageFormatError
from elgrid.models.image import GrayImage
from elgrid.models.results import DetectionResult

logger = logging.getLogger("ELGRID")

LUMA = np.array([0.299, 0.587, 0.114])
SIXTEEN_BIT_MODES = ("I;16", "I;16B", "I;16L", "I;16N", "I")


def from_raw(array) -> GrayImage:
    """
    依容器位元深度線性縮放到 [0, 1]：8-bit 除以 255，16-bit 除以 65535。
    """
    arr = np.asarray(array)
    if arr.ndim != 2 or 0 in arr.shape:
        raise ImageFormatError(f"Zero-area or non-2-D image: shape {arr.shape}")
    if arr.dtype == np.uint8:
        return GrayImage.from_array(arr / 255.0, copy=False)
    if arr.dtype == np.uint16:
        return GrayImage.from_array(arr / 65535.0, copy=False)
    if np.issubdtype(arr.dtype, np.integer) and arr.size and arr.min() >= 0 and arr.max() <= 65535:
        # Pillow 以 32-bit "I" 模式讀入的 16-bit 影像
        return GrayImage.from_array(arr / 65535.0, copy=False)
    raise ImageFormatError(f"Unsupported bit depth: {arr.dtype}")


def load_image(path: str) -> GrayImage:
    """讀取 PNG / TIFF (只取第一張)，彩色影像以 luma 轉為灰階。"""
    if not os.path.exists(path):
        raise ImageFormatError(f"Image file not found: {path}")
    try:
        with Image.open(path) as im:
            im.seek(0)
            mode = im.mode
            if mode == "L":
                return from_raw(np.array(im, dtype=np.uint8))
            if mode in SIXTEEN_BIT_MODES:
                return from_raw(np.array(im))
            if mode in ("1", "LA"):
                return from_raw(np.array(im.convert("L"), dtype=np.uint8))
            if mode in ("RGB", "RGBA", "P"):
                rgb = np.array(im.convert("RGB"), dtype=np.float64)
                return GrayImage.from_array(np.clip(rgb @ LUMA / 255.0, 0.0, 1.0), copy=False)
    except (UnidentifiedImageError, Image.DecompressionBombError, OSError, EOFError) as exc:
        raise ImageFormatError(f"Cannot read image {path}: {exc}") from exc
    raise ImageFormatError(f"Unsupported image mode '{mode}' in {path}")


def to_uint16(img: GrayImage) -> np.ndarray:
    return np.round(np.clip(img.data, 0.0, 1.0) * 65535.0).astype(np.uint16)


def save_image(img: GrayImage, path: str):
    """存成 16-bit 灰階 PNG。"""
    Image.fromarray(to_uint16(img)).save(path)


def save_overlay(img: GrayImage, result: DetectionResult, path: str, radius: Optional[float] = None):
    """
    疊圖：模組四邊形 (黃)、inlier 格點 (綠)、outlier (紅)。
    """
    gray = np.round(img.data * 255.0).astype(np.uint8)
    out = Image.fromarray(gray).convert("RGB")
    d = ImageDraw.Draw(out)

    poly = [tuple(map(float, p)) for p in result.corners]
    d.line(poly + [poly[0]], fill=(255, 220, 0), width=2)

    r = radius if radius is not None else max(2.0, 0.002 * max(img.width, img.height))
    for e in result.crossings.entries:
        if e.miss:
            continue
        x, y = float(e.image[0]), float(e.image[1])
        color = (0, 220, 0) if e.inlier else (230, 0, 0)
        d.ellipse((x - r, y - r, x + r, y + r), outline=color, width=1)
    out.save(path)
    logger.debug(f"Overlay written to {path}")
