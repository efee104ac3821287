from typing import Optional


class ELGridError(Exception):
    """所有偵測錯誤的基底類別，帶有 E-Code 與失敗階段。"""

    code = "E00"

    def __init__(self, message: str = "", stage: Optional[str] = None):
        super().__init__(message)
        self.stage = stage

    def to_dict(self):
        return {"code": self.code, "stage": self.stage, "message": str(self)}


class ImageFormatError(ELGridError):
    code = "E01"  # 無法讀取 / 不支援的位元深度 / 零面積


class InvalidInputError(ELGridError):
    code = "E02"


class NoModuleFound(ELGridError):
    code = "E10"


class DegenerateBox(ELGridError):
    code = "E11"


class AmbiguousOrientation(ELGridError):
    code = "E12"


class DegenerateConfiguration(ELGridError):
    code = "E20"


class PointAtInfinity(ELGridError):
    code = "E21"


class InsufficientConsensus(ELGridError):
    code = "E22"


class PatchOutsideImage(ELGridError):
    code = "E30"


class SceneError(ELGridError):
    code = "E40"


class PolygonError(ELGridError):
    code = "E50"


class StageError(ELGridError):
    """Pipeline 包裝錯誤：保留原始錯誤的 E-Code，並標示失敗的階段。"""

    code = "E90"

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}", stage=stage)
        self.cause = cause
        self.code = getattr(cause, "code", "E90")
