"""
emtriage 도메인 타입

모든 타입은 생성 후 불변(frozen)으로 다룬다. numpy 배열 필드는 생성 시 읽기 전용으로 고정되어
여러 워커가 같은 트레이스를 공유해도 안전하다.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence

import numpy as np

from emtriage.errors import InvalidArgumentError, UnknownClassError

BYTES_PER_SAMPLE = 8  # float32 I + float32 Q


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# ============================================================
# signal-core
# ============================================================

@dataclass(frozen=True, eq=False)
class IQTrace:
    """복소 I/Q 트레이스 (파이프라인 공용 단위)"""
    samples: np.ndarray
    sample_rate_hz: float
    center_freq_hz: float = 0.0
    label: Optional[str] = None
    seed: Optional[int] = None
    captured_at: Optional[datetime] = None
    # 사이드카의 알 수 없는 키 (재기록 시 보존)
    extra: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise InvalidArgumentError(f"sample_rate_hz는 양수여야 합니다: {self.sample_rate_hz}")
        if self.center_freq_hz < 0:
            raise InvalidArgumentError(f"center_freq_hz는 음수일 수 없습니다: {self.center_freq_hz}")
        # sidecar는 한 줄에 key=value 하나
        if self.label is not None and any(c in self.label for c in '\r\n='):
            raise InvalidArgumentError(f"label에 줄바꿈이나 '='를 넣을 수 없습니다: {self.label!r}")
        for key, value in self.extra.items():
            if not key or key != key.strip() or key.startswith('#') or any(c in key for c in '\r\n='):
                raise InvalidArgumentError(f"sidecar 키 형식 오류: {key!r}")
            if any(c in str(value) for c in '\r\n'):
                raise InvalidArgumentError(f"sidecar 값에 줄바꿈을 넣을 수 없습니다: {key}={value!r}")
        samples = np.array(self.samples, dtype=np.complex64, copy=True).reshape(-1)
        object.__setattr__(self, 'samples', _frozen(samples))

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_seconds(self) -> float:
        return self.n_samples / self.sample_rate_hz

    @property
    def payload_bytes(self) -> int:
        return self.n_samples * BYTES_PER_SAMPLE

    def with_samples(self, samples: np.ndarray, sample_rate_hz: Optional[float] = None) -> 'IQTrace':
        """메타데이터를 유지한 채 샘플(및 샘플레이트)만 교체"""
        return replace(
            self,
            samples=samples,
            sample_rate_hz=self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz,
            extra=dict(self.extra),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IQTrace):
            return NotImplemented
        return (
            self.samples.tobytes() == other.samples.tobytes()
            and self.sample_rate_hz == other.sample_rate_hz
            and self.center_freq_hz == other.center_freq_hz
            and self.label == other.label
            and self.seed == other.seed
            and self.captured_at == other.captured_at
            and self.extra == other.extra
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self):
        return (f'<IQTrace n={self.n_samples} rate={self.sample_rate_hz:g}Hz '
                f'fc={self.center_freq_hz:g}Hz label={self.label}>')


@dataclass(frozen=True)
class StorageBudget:
    """I/Q 저장 용량 계산 결과"""
    sample_rate_hz: float
    duration_s: float
    n_samples: int
    total_bytes: int
    bytes_per_sample: int = BYTES_PER_SAMPLE

    @property
    def gib(self) -> float:
        return self.total_bytes / float(1024 ** 3)

    @property
    def gb(self) -> float:
        return self.total_bytes / 1e9


# ============================================================
# emitter-sim
# ============================================================

@dataclass(frozen=True)
class ProgramClassSpec:
    """프로그램 클래스별 AM 엔벨로프 정의"""
    class_id: str
    # (offset_freq_hz, relative amplitude 0~1]
    envelope_tones: tuple[tuple[float, float], ...]
    # (period_s, on_fraction) - 없으면 상시 동작
    duty_pattern: Optional[tuple[float, float]] = None

    def __post_init__(self):
        tones = tuple((float(f), float(a)) for f, a in self.envelope_tones)
        if not tones:
            raise InvalidArgumentError(f"클래스 {self.class_id!r}: 엔벨로프 톤이 최소 1개 필요합니다")
        for f, a in tones:
            if not (0.0 < a <= 1.0):
                raise InvalidArgumentError(f"클래스 {self.class_id!r}: 톤 진폭은 (0, 1] 범위여야 합니다: {a}")
        if self.duty_pattern is not None:
            period, on_fraction = self.duty_pattern
            if period <= 0 or not (0.0 < on_fraction <= 1.0):
                raise InvalidArgumentError(f"클래스 {self.class_id!r}: duty_pattern 값이 잘못되었습니다: {self.duty_pattern}")
        object.__setattr__(self, 'envelope_tones', tones)

    @property
    def max_offset_hz(self) -> float:
        return max(abs(f) for f, _ in self.envelope_tones)

    @property
    def strongest_tone(self) -> tuple[float, float]:
        return max(self.envelope_tones, key=lambda t: t[1])


@dataclass(frozen=True)
class EmitterProfile:
    """누설 프로세서의 파라메트릭 모델"""
    name: str
    carrier_freq_hz: float
    harmonic_index: int
    noise_floor_db: float
    impulse_rate_hz: float
    impulse_gain_db: float
    classes: tuple[ProgramClassSpec, ...]
    # 수신기 ADC 양자화 비트 (0이면 끔)
    adc_bits: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'classes', tuple(self.classes))
        ids = [c.class_id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError(f"프로파일 {self.name!r}: class_id 중복: {ids}")
        if self.noise_floor_db >= 0:
            raise InvalidArgumentError(f"noise_floor_db는 0 dB 미만이어야 합니다: {self.noise_floor_db}")
        if self.harmonic_index < 1:
            raise InvalidArgumentError(f"harmonic_index는 1 이상이어야 합니다: {self.harmonic_index}")
        if self.impulse_rate_hz < 0:
            raise InvalidArgumentError(f"impulse_rate_hz는 음수일 수 없습니다: {self.impulse_rate_hz}")
        if self.adc_bits < 0 or self.adc_bits == 1:
            raise InvalidArgumentError(f"adc_bits는 0(끔) 또는 2 이상이어야 합니다: {self.adc_bits}")

    @property
    def emission_freq_hz(self) -> float:
        """관측 주파수 = carrier × harmonic"""
        return self.carrier_freq_hz * self.harmonic_index

    @property
    def class_ids(self) -> list[str]:
        return [c.class_id for c in self.classes]

    def get_class(self, class_id: str) -> ProgramClassSpec:
        for c in self.classes:
            if c.class_id == class_id:
                return c
        raise UnknownClassError(class_id, self.class_ids)

    def class_index(self, class_id: str) -> int:
        return self.class_ids.index(self.get_class(class_id).class_id)

    def with_classes(self, classes: Sequence[ProgramClassSpec]) -> 'EmitterProfile':
        return replace(self, classes=tuple(classes))


@dataclass(frozen=True)
class ClassSchedule:
    """실시간 데모용 클래스 전환 일정 [(start_s, class_id), ...]"""
    entries: tuple[tuple[float, str], ...]

    def __post_init__(self):
        entries = tuple(sorted((float(t), str(c)) for t, c in self.entries))
        if not entries:
            raise InvalidArgumentError("ClassSchedule이 비어 있습니다")
        if entries[0][0] != 0.0:
            raise InvalidArgumentError(f"ClassSchedule은 0초에서 시작해야 합니다: {entries[0][0]}")
        object.__setattr__(self, 'entries', entries)

    def class_at(self, t_s: float) -> str:
        current = self.entries[0][1]
        for start, class_id in self.entries:
            if start <= t_s:
                current = class_id
            else:
                break
        return current

    @classmethod
    def parse(cls, text: str) -> 'ClassSchedule':
        """'0:prog3,2.5:prog5' 형식 파싱"""
        entries = []
        for part in text.split(','):
            part = part.strip()
            if not part:
                continue
            if ':' not in part:
                raise InvalidArgumentError(f"schedule 항목은 'start_s:class_id' 형식이어야 합니다: {part!r}")
            t, c = part.split(':', 1)
            entries.append((float(t), c.strip()))
        return cls(tuple(entries))


# ============================================================
# spectral-features
# ============================================================

REDUCTIONS = ('mean', 'max')
TRIMS = ('middle_half', 'none')
WINDOWS = ('none', 'hann')


@dataclass(frozen=True)
class FeatureConfig:
    """특징 추출 설정"""
    segment_s: float = 0.01
    n_buckets: int = 500
    reduction: str = 'mean'
    trim: str = 'middle_half'
    window: str = 'none'

    def __post_init__(self):
        if not self.segment_s > 0:
            raise InvalidArgumentError(f"segment_s는 양수여야 합니다: {self.segment_s}")
        if self.n_buckets < 1:
            raise InvalidArgumentError(f"n_buckets는 1 이상이어야 합니다: {self.n_buckets}")
        if self.reduction not in REDUCTIONS:
            raise InvalidArgumentError(f"reduction은 {REDUCTIONS} 중 하나여야 합니다: {self.reduction!r}")
        if self.trim not in TRIMS:
            raise InvalidArgumentError(f"trim은 {TRIMS} 중 하나여야 합니다: {self.trim!r}")
        if self.window not in WINDOWS:
            raise InvalidArgumentError(f"window는 {WINDOWS} 중 하나여야 합니다: {self.window!r}")

    def spectrum_length(self, sample_rate_hz: float) -> int:
        n = int(round(self.segment_s * sample_rate_hz))
        if self.trim == 'middle_half':
            return (3 * n) // 4 - n // 4
        return n

    def describe(self) -> str:
        return f'{self.segment_s * 1e3:g}ms/{self.n_buckets}{self.reduction}/{self.trim}'


# 암호 연산 분류 (4 클래스, 500 평균 버킷)
CRYPTO_FEATURES = FeatureConfig(segment_s=0.01, n_buckets=500, reduction='mean', trim='middle_half')
# 프로그램 분류 (10 클래스, 1,000 최대값 버킷)
PROGRAM_FEATURES = FeatureConfig(segment_s=0.01, n_buckets=1000, reduction='max', trim='middle_half')


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """버킷화된 스펙트럼 크기 벡터"""
    values: np.ndarray
    config: FeatureConfig
    source_label: Optional[str] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, 'values', _frozen(values))

    def __len__(self):
        return int(self.values.shape[0])


# ============================================================
# mlp-classifier
# ============================================================

@dataclass(frozen=True, eq=False)
class Dataset:
    """특징 행렬 + 정수 라벨 + 클래스 테이블"""
    X: np.ndarray
    y: np.ndarray
    class_table: tuple[str, ...]

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(0, 0) if X.size == 0 else X.reshape(1, -1)
        y = np.array(self.y, dtype=np.int64).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise InvalidArgumentError(f"행 수 불일치: X={X.shape[0]}, y={y.shape[0]}")
        table = tuple(self.class_table)
        if y.size and (y.min() < 0 or y.max() >= len(table)):
            raise InvalidArgumentError(f"class_index 범위 초과: classes={len(table)}")
        object.__setattr__(self, 'X', _frozen(X))
        object.__setattr__(self, 'y', _frozen(y))
        object.__setattr__(self, 'class_table', table)

    @property
    def n_rows(self) -> int:
        return int(self.X.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.X.shape[1]) if self.X.ndim == 2 else 0

    @property
    def n_classes(self) -> int:
        return len(self.class_table)

    @property
    def rows(self) -> Iterator[tuple[np.ndarray, int]]:
        for i in range(self.n_rows):
            yield self.X[i], int(self.y[i])

    def class_counts(self) -> dict[str, int]:
        counts = np.bincount(self.y, minlength=self.n_classes)
        return {name: int(counts[i]) for i, name in enumerate(self.class_table)}

    def subset(self, index: np.ndarray) -> 'Dataset':
        return Dataset(self.X[index], self.y[index], self.class_table)

    def __repr__(self):
        return f'<Dataset rows={self.n_rows} dim={self.feature_dim} classes={self.n_classes}>'


ACTIVATIONS = ('tanh', 'sigmoid')


@dataclass(frozen=True)
class MlpConfig:
    """MLP 학습 설정"""
    hidden_layers: tuple[int, ...] = (10, 5)
    learning_rate: float = 0.01
    epochs: int = 300
    batch_size: int = 32
    seed: int = 0
    standardize: bool = True
    momentum: float = 0.9
    activation: str = 'tanh'
    early_stop_delta: float = 1e-6
    early_stop_patience: int = 10

    def __post_init__(self):
        layers = tuple(int(h) for h in self.hidden_layers)
        if not layers or any(h < 1 for h in layers):
            raise InvalidArgumentError(f"hidden_layers는 양의 정수 목록이어야 합니다: {self.hidden_layers}")
        if not self.learning_rate > 0:
            raise InvalidArgumentError(f"learning_rate는 양수여야 합니다: {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgumentError(f"epochs/batch_size는 1 이상이어야 합니다: {self.epochs}/{self.batch_size}")
        if not (0.0 <= self.momentum < 1.0):
            raise InvalidArgumentError(f"momentum은 [0, 1) 범위여야 합니다: {self.momentum}")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"activation은 {ACTIVATIONS} 중 하나여야 합니다: {self.activation!r}")
        object.__setattr__(self, 'hidden_layers', layers)


@dataclass(frozen=True, eq=False)
class MlpModel:
    """학습된 MLP 가중치 + 표준화 통계 + 클래스 테이블"""
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str
    mean: np.ndarray
    std: np.ndarray
    class_table: tuple[str, ...]

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"activation은 {ACTIVATIONS} 중 하나여야 합니다: {self.activation!r}")
        object.__setattr__(self, 'weights', tuple(_frozen(np.array(w, dtype=np.float64)) for w in self.weights))
        object.__setattr__(self, 'biases', tuple(_frozen(np.array(b, dtype=np.float64).reshape(-1)) for b in self.biases))
        object.__setattr__(self, 'mean', _frozen(np.array(self.mean, dtype=np.float64).reshape(-1)))
        std = np.array(self.std, dtype=np.float64).reshape(-1)
        std[~(std > 0)] = 1.0
        object.__setattr__(self, 'std', _frozen(std))
        object.__setattr__(self, 'class_table', tuple(self.class_table))
        dims = self.topology
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise InvalidArgumentError(f"레이어 {i} 차원이 연결되지 않습니다: W={w.shape}, b={b.shape}")
        if dims[-1] != len(self.class_table):
            raise InvalidArgumentError(f"출력 차원({dims[-1]})과 클래스 수({len(self.class_table)}) 불일치")
        if self.mean.shape[0] != dims[0] or self.std.shape[0] != dims[0]:
            raise InvalidArgumentError("표준화 통계 차원이 입력 차원과 다릅니다")

    @property
    def topology(self) -> list[int]:
        return [int(self.weights[0].shape[0])] + [int(w.shape[1]) for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.topology[0]

    def __repr__(self):
        return f'<MlpModel topology={self.topology} classes={list(self.class_table)}>'


@dataclass(frozen=True, eq=False)
class ClassificationReport:
    """혼동 행렬 + 클래스별 precision/recall/f1"""
    class_table: tuple[str, ...]
    confusion_matrix: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float

    @property
    def total(self) -> int:
        return int(self.confusion_matrix.sum())

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1)) if self.f1.size else 0.0


@dataclass(frozen=True)
class CrossValReport:
    """k-fold 교차 검증 결과"""
    k: int
    fold_accuracies: tuple[float, ...]
    mean_accuracy: float
    ci95_halfwidth: float
    fold_f1: tuple[float, ...] = ()
    mean_f1: float = 0.0
    ci95_f1_halfwidth: float = 0.0
    # 모든 fold의 테스트 예측을 합친 혼동 행렬/리포트
    pooled: Optional[ClassificationReport] = None


# ============================================================
# novelty-detector
# ============================================================

@dataclass(frozen=True)
class NoveltyConfig:
    """One-class SVM 설정"""
    nu: float = 0.1
    gamma: Any = 'scale'  # float 또는 'scale'
    seed: int = 0
    tol: float = 1e-6
    max_iter: int = 100_000

    def __post_init__(self):
        if not (0.0 < self.nu <= 1.0):
            raise InvalidArgumentError(f"nu는 (0, 1] 범위여야 합니다: {self.nu}")
        if isinstance(self.gamma, str):
            if self.gamma != 'scale':
                raise InvalidArgumentError(f"gamma는 양수 또는 'scale'이어야 합니다: {self.gamma!r}")
        elif not float(self.gamma) > 0:
            raise InvalidArgumentError(f"gamma는 양수여야 합니다: {self.gamma}")


@dataclass(frozen=True, eq=False)
class NoveltyModel:
    """RBF one-class 경계 (support vector + dual 계수 + rho)"""
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    rho: float
    gamma: float
    mean: np.ndarray
    std: np.ndarray
    config: NoveltyConfig
    n_train: int

    def __post_init__(self):
        object.__setattr__(self, 'support_vectors', _frozen(np.array(self.support_vectors, dtype=np.float64)))
        object.__setattr__(self, 'dual_coef', _frozen(np.array(self.dual_coef, dtype=np.float64).reshape(-1)))
        object.__setattr__(self, 'mean', _frozen(np.array(self.mean, dtype=np.float64).reshape(-1)))
        object.__setattr__(self, 'std', _frozen(np.array(self.std, dtype=np.float64).reshape(-1)))

    @property
    def feature_dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def n_support(self) -> int:
        return int(self.support_vectors.shape[0])

    def __repr__(self):
        return f'<NoveltyModel sv={self.n_support}/{self.n_train} dim={self.feature_dim} rho={self.rho:.4g}>'


@dataclass(frozen=True)
class TamperVerdict:
    """트레이스별 변조 판정"""
    trace_id: str
    score: float
    is_outlier: bool

    @property
    def verdict(self) -> str:
        return 'MODIFIED' if self.is_outlier else 'LEGIT'


@dataclass(frozen=True)
class TamperSummary:
    verdicts: tuple[TamperVerdict, ...]

    @property
    def n_total(self) -> int:
        return len(self.verdicts)

    @property
    def n_outliers(self) -> int:
        return sum(1 for v in self.verdicts if v.is_outlier)

    @property
    def n_inliers(self) -> int:
        return self.n_total - self.n_outliers

    @property
    def fraction_flagged(self) -> float:
        return self.n_outliers / self.n_total if self.n_total else 0.0


# ============================================================
# realtime-stream
# ============================================================

@dataclass(frozen=True, eq=False)
class StreamWindow:
    """스트림에서 잘라낸 고정 길이 윈도우"""
    seq: int
    samples: np.ndarray
    received_at: float  # time.monotonic()


@dataclass(frozen=True)
class WindowResult:
    """윈도우 1개의 분류 결과"""
    seq: int
    class_name: str
    score: float
    processing_delay_ms: float
    queue_delay_ms: float = 0.0
    overrun: bool = False


@dataclass(frozen=True)
class LatencyReport:
    """처리 지연 통계 (윈도우 단위)"""
    sample_rate_hz: float
    window_len_samples: int
    n_windows: int
    min_ms: float
    mean_ms: float
    p95_ms: float
    max_ms: float
    deadline_ms: float
    overruns: int
    backpressure_events: int = 0


@dataclass
class StreamStats:
    """소비자 세션 통계 (세션 진행 중 갱신)"""
    windows: int = 0
    samples: int = 0
    overruns: int = 0
    backpressure_events: int = 0
    truncated_tail_bytes: int = 0
    delays_ms: list[float] = field(default_factory=list)


# ============================================================
# trace-store
# ============================================================

MANIFEST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ManifestEntry:
    """코퍼스 매니페스트 1행"""
    path: str  # root 기준 상대 경로 (.cf32)
    label: str
    sample_rate_hz: float
    center_freq_hz: float
    duration_s: float
    seed: Optional[int]
    n_bytes: int

    def __post_init__(self):
        if not self.label:
            raise InvalidArgumentError(f"매니페스트 라벨이 비어 있습니다: {self.path}")


@dataclass(frozen=True)
class CorpusManifest:
    """코퍼스 루트 + 엔트리 목록"""
    root: Path
    entries: tuple[ManifestEntry, ...]
    format_version: int = MANIFEST_FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, 'root', Path(self.root))
        object.__setattr__(self, 'entries', tuple(self.entries))

    @property
    def labels(self) -> list[str]:
        return sorted({e.label for e in self.entries})

    @property
    def total_bytes(self) -> int:
        return sum(e.n_bytes for e in self.entries)

    def by_label(self) -> dict[str, list[ManifestEntry]]:
        groups: dict[str, list[ManifestEntry]] = {}
        for e in self.entries:
            groups.setdefault(e.label, []).append(e)
        return groups

    def __len__(self):
        return len(self.entries)
