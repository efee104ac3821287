from elgrid.core.analyzer import ELGridDetector, detect, extract_cells

__version__ = "1.0.0"
__all__ = ["ELGridDetector", "detect", "extract_cells"]
