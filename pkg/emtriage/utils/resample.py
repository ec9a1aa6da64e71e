"""
트레이스 구간 추출 / 다운샘플링

다운샘플링은 Hamming 창 windowed-sinc FIR(선형 위상) 저역통과 후 데시메이션.
차단 주파수는 0.45 × target_rate. 정수 비율이면 1/k 경로, 아니면 up/down 유리수 리샘플링.
"""
from __future__ import annotations

import logging
from dataclasses import replace
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import signal

from emtriage.errors import InvalidArgumentError, TraceRangeError, UnsupportedRatioError
from emtriage.models import IQTrace

logger = logging.getLogger(__name__)

DEFAULT_NUMTAPS = 129
CUTOFF_FRACTION = 0.45
# 유리수 리샘플링에서 허용하는 최대 up/down 계수
MAX_RATIONAL_FACTOR = 100

# exp-downsample 샘플레이트 사다리 (20 MHz 수집 기준)
RATE_LADDER_HZ = (16e6, 12e6, 8e6, 4e6, 3e6, 2e6, 1e6, 0.5e6)


def segment(trace: IQTrace, start_s: float, duration_s: float) -> IQTrace:
    """[start_s, start_s + duration_s) 연속 구간 추출 (메타데이터 상속)"""
    if start_s < 0 or duration_s < 0:
        raise TraceRangeError(start_s, duration_s, trace.duration_seconds)
    rate = trace.sample_rate_hz
    start_idx = int(round(start_s * rate))
    count = int(round(duration_s * rate))
    if start_idx + count > trace.n_samples:
        raise TraceRangeError(start_s, duration_s, trace.duration_seconds)
    if start_idx == 0 and count == trace.n_samples:
        return trace
    return trace.with_samples(trace.samples[start_idx:start_idx + count])


def resampling_factors(source_rate_hz: float, target_rate_hz: float) -> tuple[int, int]:
    """(up, down) 계수. 정수 데시메이션이면 up == 1."""
    if not target_rate_hz > 0:
        raise InvalidArgumentError(f"target_rate_hz는 양수여야 합니다: {target_rate_hz}")
    if target_rate_hz > source_rate_hz:
        raise InvalidArgumentError(
            f"target_rate_hz({target_rate_hz:g})가 원본 샘플레이트({source_rate_hz:g})보다 큽니다"
        )
    ratio = source_rate_hz / target_rate_hz
    k = int(round(ratio))
    if abs(ratio - k) <= 1e-9 * ratio:
        return 1, k

    frac = Fraction(target_rate_hz / source_rate_hz).limit_denominator(MAX_RATIONAL_FACTOR)
    up, down = frac.numerator, frac.denominator
    if up < 1 or abs(source_rate_hz * up / down - target_rate_hz) > 1e-6 * target_rate_hz:
        raise UnsupportedRatioError(
            f"지원하지 않는 리샘플링 비율: {source_rate_hz:g} Hz → {target_rate_hz:g} Hz "
            f"(up/down ≤ {MAX_RATIONAL_FACTOR}로 표현 불가)"
        )
    return up, down


def design_antialias_filter(
    source_rate_hz: float,
    target_rate_hz: float,
    numtaps: int = DEFAULT_NUMTAPS,
    up: int = 1,
) -> np.ndarray:
    """DC 이득 1의 Hamming windowed-sinc 저역통과 탭 (up 배 보간된 샘플레이트 기준)"""
    if numtaps < 3 or numtaps % 2 == 0:
        raise InvalidArgumentError(f"numtaps는 3 이상의 홀수여야 합니다: {numtaps}")
    # 보간 시 같은 전이 대역폭을 유지하도록 탭 수를 up 배로
    n = numtaps * up
    if n % 2 == 0:
        n += 1
    return signal.firwin(
        n,
        CUTOFF_FRACTION * target_rate_hz,
        window='hamming',
        fs=source_rate_hz * up,
    )


def downsample(trace: IQTrace, target_rate_hz: float, numtaps: int = DEFAULT_NUMTAPS) -> IQTrace:
    """anti-alias 필터 + 데시메이션. 출력 길이 = floor(n × up / down)."""
    up, down = resampling_factors(trace.sample_rate_hz, target_rate_hz)
    if up == 1 and down == 1:
        return trace

    taps = design_antialias_filter(trace.sample_rate_hz, target_rate_hz, numtaps=numtaps, up=up)
    n_out = (trace.n_samples * up) // down
    if n_out == 0:
        out = np.zeros(0, dtype=np.complex64)
    else:
        # resample_poly가 필터 군지연을 보정하고 내부에서 taps × up 스케일링
        out = signal.resample_poly(trace.samples.astype(np.complex128), up, down, window=taps)[:n_out]

    extra = dict(trace.extra)
    extra.setdefault('resampled_from_hz', repr(float(trace.sample_rate_hz)))
    resampled = replace(trace, samples=out.astype(np.complex64), sample_rate_hz=float(target_rate_hz), extra=extra)
    logger.debug(
        f'다운샘플링: {trace.sample_rate_hz:g} → {target_rate_hz:g} Hz '
        f'(up={up}, down={down}, taps={taps.shape[0]}, {trace.n_samples} → {n_out} samples)'
    )
    return resampled


def tone_magnitude(samples: np.ndarray, sample_rate_hz: float, freq_hz: float, window: Optional[str] = 'hann') -> float:
    """단일 톤의 진폭 추정 (정규화된 DFT 피크). 다운샘플링 검증용."""
    n = samples.shape[0]
    if n == 0:
        return 0.0
    w = signal.get_window(window, n) if window else np.ones(n)
    t = np.arange(n) / sample_rate_hz
    ref = np.exp(-2j * np.pi * freq_hz * t)
    return float(np.abs(np.sum(samples.astype(np.complex128) * w * ref)) / np.sum(w))
