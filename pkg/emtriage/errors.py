"""
emtriage 예외 계층

CLI는 `exit_code` 속성 하나로 종료 코드를 결정한다.
  - 1: 운영 오류 (파일/네트워크/수치 문제)
  - 2: 사용법 오류 (잘못된 인자, 없는 클래스, 차원 불일치)
  - 3: 검증/수용 기준 실패
"""
from __future__ import annotations

from typing import Iterable, Optional


class EmTriageError(Exception):
    """emtriage 공통 예외"""
    exit_code = 1


# ---- 사용법 오류 (code 2) -------------------------------------------------

class InvalidArgumentError(EmTriageError, ValueError):
    exit_code = 2


class UnknownClassError(EmTriageError, LookupError):
    exit_code = 2

    def __init__(self, class_id: str, known: Iterable[str]):
        self.class_id = class_id
        self.known = sorted(known)
        super().__init__(f"알 수 없는 클래스: {class_id!r} (사용 가능: {', '.join(self.known)})")


class ShapeError(EmTriageError, ValueError):
    exit_code = 2

    def __init__(self, expected: int, actual: int, what: str = "feature"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what} 차원 불일치: expected={expected}, actual={actual}")


class IncompatibleDatasetError(EmTriageError):
    exit_code = 2


# ---- 운영 오류 (code 1) ---------------------------------------------------

class MalformedTraceError(EmTriageError):
    pass


class CorruptSampleError(EmTriageError):
    def __init__(self, index: int, path: Optional[str] = None):
        self.index = index
        self.path = path
        where = f" ({path})" if path else ""
        super().__init__(f"유한하지 않은 샘플 발견: index={index}{where}")


class TraceRangeError(EmTriageError):
    def __init__(self, start_s: float, duration_s: float, available_s: float):
        self.start_s = start_s
        self.duration_s = duration_s
        self.available_s = available_s
        super().__init__(
            f"구간이 트레이스 범위를 벗어남: requested=[{start_s:g}s, {start_s + duration_s:g}s), "
            f"available={available_s:g}s"
        )


class UnsupportedRatioError(EmTriageError):
    pass


class InsufficientDataError(EmTriageError):
    pass


class MissingLabelError(EmTriageError):
    pass


class InvalidDatasetError(EmTriageError):
    pass


class InsufficientSamplesError(EmTriageError):
    def __init__(self, class_name: str, have: int, need: int):
        self.class_name = class_name
        self.have = have
        self.need = need
        super().__init__(f"클래스 {class_name!r} 샘플 부족: have={have}, need={need}")


class DivergenceError(EmTriageError):
    def __init__(self, epoch: int, learning_rate: float):
        self.epoch = epoch
        self.learning_rate = learning_rate
        super().__init__(f"학습 발산 (loss 비유한값): epoch={epoch}, learning_rate={learning_rate:g}")


class ModelFormatError(EmTriageError):
    pass


class DegenerateDataError(EmTriageError):
    pass


class SolverError(EmTriageError):
    def __init__(self, iterations: int, gap: float):
        self.iterations = iterations
        self.gap = gap
        super().__init__(f"one-class SVM 수렴 실패: iterations={iterations}, gap={gap:.3e}")


class StreamError(EmTriageError):
    pass


class CorpusError(EmTriageError):
    pass


class ProfileFormatError(EmTriageError):
    pass


# ---- 수용 기준 실패 (code 3) ----------------------------------------------

class AcceptanceError(EmTriageError):
    exit_code = 3
