"""
스펙트럼 특징 추출

segment(0, segment_s) → |FFT| (DC 중앙 정렬) → 중앙 1/2 trim → 버킷 평균/최대
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from itertools import islice
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy import signal

from emtriage.errors import InsufficientDataError, InvalidArgumentError, MissingLabelError
from emtriage.models import Dataset, FeatureConfig, FeatureVector, IQTrace
from emtriage.utils.resample import segment

logger = logging.getLogger(__name__)


def fft_magnitude(segment_trace: IQTrace) -> np.ndarray:
    """DFT 크기 스펙트럼. 음수 주파수 → DC → 양수 주파수 순 (길이 = 샘플 수)"""
    return spectrum_of(segment_trace.samples)


def spectrum_of(samples: np.ndarray, window: str = 'none') -> np.ndarray:
    n = samples.shape[0]
    if n == 0:
        raise InvalidArgumentError("빈 구간의 FFT는 계산할 수 없습니다")
    x = samples.astype(np.complex128)
    if window == 'hann':
        x = x * signal.get_window('hann', n)
    return np.abs(sp_fft.fftshift(sp_fft.fft(x)))


def trim_middle_half(spectrum: np.ndarray) -> np.ndarray:
    """[floor(L/4), floor(3L/4)) 구간만 남김"""
    spectrum = np.asarray(spectrum)
    n = spectrum.shape[0]
    if n < 4:
        raise InvalidArgumentError(f"trim_middle_half는 길이 4 이상이 필요합니다: {n}")
    return spectrum[n // 4:(3 * n) // 4]


def bucket_starts(length: int, n_buckets: int) -> np.ndarray:
    """버킷 시작 인덱스. 나머지는 앞쪽 버킷에 1개씩 분배."""
    q, r = divmod(length, n_buckets)
    idx = np.arange(n_buckets)
    return idx * q + np.minimum(idx, r)


def bucketize(
    spectrum: np.ndarray,
    n_buckets: int,
    reduction: str = 'mean',
    config: Optional[FeatureConfig] = None,
    source_label: Optional[str] = None,
) -> FeatureVector:
    spectrum = np.asarray(spectrum, dtype=np.float64)
    n = spectrum.shape[0]
    if n_buckets < 1:
        raise InvalidArgumentError(f"n_buckets는 1 이상이어야 합니다: {n_buckets}")
    if n_buckets > n:
        raise InvalidArgumentError(f"n_buckets({n_buckets})가 스펙트럼 길이({n})보다 큽니다")

    starts = bucket_starts(n, n_buckets)
    if reduction == 'mean':
        sizes = np.diff(np.append(starts, n))
        values = np.add.reduceat(spectrum, starts) / sizes
    elif reduction == 'max':
        values = np.maximum.reduceat(spectrum, starts)
    else:
        raise InvalidArgumentError(f"reduction은 mean/max 중 하나여야 합니다: {reduction!r}")

    if config is None:
        config = FeatureConfig(n_buckets=n_buckets, reduction=reduction, trim='none')
    return FeatureVector(values=values, config=config, source_label=source_label)


def make_features(trace: IQTrace, config: FeatureConfig) -> FeatureVector:
    """트레이스 1개 → FeatureVector"""
    need = int(round(config.segment_s * trace.sample_rate_hz))
    if trace.n_samples < need or need == 0:
        raise InsufficientDataError(
            f"트레이스가 segment보다 짧습니다: have={trace.duration_seconds:g}s, need={config.segment_s:g}s"
            + (f" (label={trace.label})" if trace.label else "")
        )
    seg = segment(trace, 0.0, config.segment_s)
    spectrum = spectrum_of(seg.samples, config.window)
    if config.trim == 'middle_half':
        spectrum = trim_middle_half(spectrum)
    if config.n_buckets > spectrum.shape[0]:
        raise InvalidArgumentError(
            f"n_buckets({config.n_buckets})가 trim 후 스펙트럼 길이({spectrum.shape[0]})보다 큽니다 "
            f"(rate={trace.sample_rate_hz:g} Hz, segment={config.segment_s:g}s)"
        )
    return bucketize(spectrum, config.n_buckets, config.reduction, config=config, source_label=trace.label)


def chunked(items: Iterable, size: int) -> Iterator[list]:
    it = iter(items)
    while True:
        block = list(islice(it, size))
        if not block:
            return
        yield block


def _trace_name(trace: IQTrace, index: int) -> str:
    name = trace.extra.get('path') if trace.extra else None
    return name or f'#{index} (seed={trace.seed})'


def feature_rows(
    traces: Iterable[IQTrace],
    config: FeatureConfig,
    workers: int = 1,
) -> Iterator[tuple[np.ndarray, str]]:
    """(values, label)을 입력 순서대로 생성. 트레이스는 workers×4개씩만 메모리에 둔다."""
    index = 0

    def _one(item):
        i, trace = item
        if not trace.label:
            raise MissingLabelError(f"라벨 없는 트레이스: {_trace_name(trace, i)}")
        return make_features(trace, config).values, trace.label

    if workers <= 1:
        for trace in traces:
            yield _one((index, trace))
            index += 1
        return

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for block in chunked(traces, workers * 4):
            numbered = list(zip(range(index, index + len(block)), block))
            index += len(block)
            # map은 입력 순서를 유지
            yield from pool.map(_one, numbered)


def batch_features(
    traces: Iterable[IQTrace],
    config: FeatureConfig,
    workers: int = 1,
    class_table: Optional[Sequence[str]] = None,
) -> Dataset:
    """트레이스 묶음 → Dataset. 클래스 인덱스는 정렬된 라벨 순서로 고정."""
    rows: list[np.ndarray] = []
    labels: list[str] = []
    for values, label in feature_rows(traces, config, workers=workers):
        rows.append(values)
        labels.append(label)
        if len(rows) % 500 == 0:
            logger.info(f'특징 추출 진행: {len(rows)} traces ({config.describe()})')

    table = tuple(sorted(set(labels))) if class_table is None else tuple(class_table)
    lookup = {name: i for i, name in enumerate(table)}
    missing = sorted(set(labels) - set(lookup))
    if missing:
        raise InvalidArgumentError(f"class_table에 없는 라벨: {', '.join(missing)}")

    X = np.vstack(rows) if rows else np.zeros((0, config.n_buckets))
    y = np.array([lookup[label] for label in labels], dtype=np.int64)
    logger.info(f'특징 추출 완료: rows={X.shape[0]}, classes={len(table)} ({config.describe()})')
    return Dataset(X=X, y=y, class_table=table)


def power_spectral_density(trace: IQTrace, nperseg: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Welch PSD (dB/Hz). 주파수 축은 중심 주파수 기준 오프셋(Hz), DC 중앙 정렬."""
    n = trace.n_samples
    if n == 0:
        raise InvalidArgumentError("빈 트레이스의 PSD는 계산할 수 없습니다")
    freqs, pxx = signal.welch(
        trace.samples.astype(np.complex128),
        fs=trace.sample_rate_hz,
        nperseg=min(nperseg, n),
        return_onesided=False,
        detrend=False,
        scaling='density',
    )
    freqs = sp_fft.fftshift(freqs)
    pxx = sp_fft.fftshift(pxx)
    return freqs, 10.0 * np.log10(pxx + np.finfo(np.float64).tiny)
