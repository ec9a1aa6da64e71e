"""
합성 EM 방출 모델 (baseband)

SDR 캡처는 이미 중심 주파수가 DC로 내려온 신호이므로 carrier를 DC에 두고,
클래스별 엔벨로프 톤으로 진폭 변조한 뒤 백색 가우시안 잡음과 포아송 임펄스를 더한다.

    s(t) = 1 + Σ a_k · cos(2π f_k t + φ_k)     (활성 구간)
    x(t) = s(t) + n(t) + impulses(t)

난수 스트림 분리 규칙 (플랫폼 무관, numpy PCG64):
    class_key = crc32(class_id)
    잡음/임펄스     SeedSequence(seed, spawn_key=(class_key, 0))
    burst b 위상    SeedSequence(seed, spawn_key=(class_key, 1 + b))
"""
from __future__ import annotations

import logging
import zlib
from itertools import count
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from emtriage.errors import InvalidArgumentError
from emtriage.models import ClassSchedule, EmitterProfile, IQTrace, ProgramClassSpec

logger = logging.getLogger(__name__)

# adc_bits 양자화 시 I/Q 각각의 full scale
ADC_FULL_SCALE = 2.0


def class_key(class_id: str) -> int:
    return zlib.crc32(class_id.encode('utf-8'))


def _generator(seed: int, *spawn_key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in spawn_key))
    return np.random.Generator(np.random.PCG64(ss))


def _check_band(spec: ProgramClassSpec, sample_rate_hz: float) -> None:
    if spec.max_offset_hz >= sample_rate_hz / 2:
        raise InvalidArgumentError(
            f"클래스 {spec.class_id!r}의 톤 {spec.max_offset_hz:g} Hz가 "
            f"나이퀴스트 대역(±{sample_rate_hz / 2:g} Hz)을 벗어납니다"
        )


def _n_samples(duration_s: float, sample_rate_hz: float) -> int:
    if not duration_s > 0:
        raise InvalidArgumentError(f"duration_s는 양수여야 합니다: {duration_s}")
    if not sample_rate_hz > 0:
        raise InvalidArgumentError(f"sample_rate_hz는 양수여야 합니다: {sample_rate_hz}")
    return int(round(duration_s * sample_rate_hz))


def _envelope(spec: ProgramClassSpec, t: np.ndarray, phases: np.ndarray) -> np.ndarray:
    mod = np.zeros_like(t)
    for (f, a), phi in zip(spec.envelope_tones, phases):
        mod += a * np.cos(2.0 * np.pi * f * t + phi)
    if spec.duty_pattern is not None:
        period, on_fraction = spec.duty_pattern
        mod *= (np.mod(t, period) < on_fraction * period)
    return 1.0 + mod


def _noise_and_impulses(profile: EmitterProfile, n: int, sample_rate_hz: float, rng: np.random.Generator) -> np.ndarray:
    # carrier 전력 1 기준 상대 잡음 전력
    sigma = np.sqrt(10.0 ** (profile.noise_floor_db / 10.0) / 2.0)
    noise = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))

    # 외부 간섭: 포아송 시각의 단일 샘플 스파이크
    n_impulses = int(rng.poisson(profile.impulse_rate_hz * n / sample_rate_hz)) if profile.impulse_rate_hz > 0 else 0
    if n_impulses and n:
        where = rng.integers(0, n, size=n_impulses)
        amp = 10.0 ** (profile.impulse_gain_db / 20.0)
        noise[where] += amp * np.exp(2j * np.pi * rng.random(n_impulses))
    return noise


def _quantize(x: np.ndarray, bits: int) -> np.ndarray:
    step = ADC_FULL_SCALE / (2 ** (bits - 1))
    re = np.clip(np.round(x.real / step) * step, -ADC_FULL_SCALE, ADC_FULL_SCALE - step)
    im = np.clip(np.round(x.imag / step) * step, -ADC_FULL_SCALE, ADC_FULL_SCALE - step)
    return re + 1j * im


def _render(
    profile: EmitterProfile,
    pieces: Sequence[tuple[ProgramClassSpec, int, int, int]],
    n: int,
    sample_rate_hz: float,
    seed: int,
    noise_key: int,
) -> np.ndarray:
    """pieces: (spec, start_idx, stop_idx, burst_index). 나머지 구간은 잡음만."""
    signal = np.zeros(n, dtype=np.complex128)
    for spec, start, stop, burst in pieces:
        if stop <= start:
            continue
        rng = _generator(seed, class_key(spec.class_id), 1 + burst)
        phases = 2.0 * np.pi * rng.random(len(spec.envelope_tones))
        t = np.arange(start, stop, dtype=np.float64) / sample_rate_hz
        signal[start:stop] = _envelope(spec, t, phases)

    signal += _noise_and_impulses(profile, n, sample_rate_hz, _generator(seed, noise_key, 0))
    if profile.adc_bits:
        signal = _quantize(signal, profile.adc_bits)
    return signal.astype(np.complex64)


def render_spec(
    profile: EmitterProfile,
    spec: ProgramClassSpec,
    duration_s: float,
    sample_rate_hz: float,
    seed: int,
) -> IQTrace:
    """프로파일에 없는 클래스(예: 변조 펌웨어 변형)도 렌더링"""
    n = _n_samples(duration_s, sample_rate_hz)
    _check_band(spec, sample_rate_hz)
    samples = _render(profile, [(spec, 0, n, 0)], n, sample_rate_hz, seed, class_key(spec.class_id))
    return IQTrace(
        samples=samples,
        sample_rate_hz=float(sample_rate_hz),
        center_freq_hz=profile.emission_freq_hz,
        label=spec.class_id,
        seed=int(seed),
    )


def synth_trace(
    profile: EmitterProfile,
    class_id: str,
    duration_s: float,
    sample_rate_hz: float,
    seed: int,
) -> IQTrace:
    """클래스 1개의 합성 트레이스 (seed 고정 시 비트 단위 재현)"""
    spec = profile.get_class(class_id)
    return render_spec(profile, spec, duration_s, sample_rate_hz, seed)


def synth_crypto_session(
    profile: EmitterProfile,
    class_id: str,
    n_bursts: int,
    gap_s: float,
    burst_s: float,
    sample_rate_hz: float,
    seed: int,
) -> IQTrace:
    """burst-gap-burst 형태의 암호 연산 세션. gap 구간은 잡음만 존재."""
    spec = profile.get_class(class_id)
    if n_bursts < 1:
        raise InvalidArgumentError(f"n_bursts는 1 이상이어야 합니다: {n_bursts}")
    if gap_s < 0:
        raise InvalidArgumentError(f"gap_s는 음수일 수 없습니다: {gap_s}")
    _check_band(spec, sample_rate_hz)

    total_s = n_bursts * burst_s + (n_bursts - 1) * gap_s
    n = _n_samples(total_s, sample_rate_hz)
    pieces = []
    for b in range(n_bursts):
        start = int(round(b * (burst_s + gap_s) * sample_rate_hz))
        stop = min(n, start + int(round(burst_s * sample_rate_hz)))
        pieces.append((spec, start, stop, b))

    samples = _render(profile, pieces, n, sample_rate_hz, seed, class_key(spec.class_id))
    logger.debug(f'암호 세션 합성: {class_id} bursts={n_bursts} gap={gap_s:g}s burst={burst_s:g}s')
    return IQTrace(
        samples=samples,
        sample_rate_hz=float(sample_rate_hz),
        center_freq_hz=profile.emission_freq_hz,
        label=class_id,
        seed=int(seed),
    )


def synth_scheduled(
    profile: EmitterProfile,
    schedule: ClassSchedule,
    duration_s: float,
    sample_rate_hz: float,
    seed: int,
    offset_s: float = 0.0,
) -> IQTrace:
    """일정표에 따라 클래스가 바뀌는 트레이스. offset_s는 일정표 시간축의 시작 위치."""
    n = _n_samples(duration_s, sample_rate_hz)
    entries = list(schedule.entries)
    pieces = []
    for i, (start_s, class_id) in enumerate(entries):
        spec = profile.get_class(class_id)
        _check_band(spec, sample_rate_hz)
        end_s = entries[i + 1][0] if i + 1 < len(entries) else float('inf')
        start = max(0, int(round((start_s - offset_s) * sample_rate_hz)))
        stop = n if end_s == float('inf') else min(n, int(round((end_s - offset_s) * sample_rate_hz)))
        if stop > start:
            pieces.append((spec, start, stop, i))

    noise_key = zlib.crc32(f'schedule@{offset_s!r}'.encode('utf-8'))
    samples = _render(profile, pieces, n, sample_rate_hz, seed, noise_key)
    label = entries[0][1] if len({c for _, c in entries}) == 1 else None
    return IQTrace(
        samples=samples,
        sample_rate_hz=float(sample_rate_hz),
        center_freq_hz=profile.emission_freq_hz,
        label=label,
        seed=int(seed),
    )


def iter_live_chunks(
    profile: EmitterProfile,
    schedule: ClassSchedule,
    sample_rate_hz: float,
    chunk_s: float,
    total_s: Optional[float],
    seed: int,
) -> Iterator[np.ndarray]:
    """실시간 서버용 청크 생성기 (청크마다 seed를 나눠 재현성 유지). total_s=None이면 무한."""
    if not chunk_s > 0:
        raise InvalidArgumentError(f"chunk_s는 양수여야 합니다: {chunk_s}")
    if total_s is None:
        chunks: Iterable[int] = count()
    else:
        chunks = range(int(np.ceil(total_s / chunk_s - 1e-9)))
    for k in chunks:
        dur = chunk_s if total_s is None else min(chunk_s, total_s - k * chunk_s)
        yield synth_scheduled(profile, schedule, dur, sample_rate_hz, seed + k, offset_s=k * chunk_s).samples


# ============================================================
# 기본 프로파일
# ============================================================

def default_profiles() -> tuple[EmitterProfile, EmitterProfile]:
    """(high_end, low_end) 기본 프로파일

    - high_end: 1.4 GHz 클럭 기본파, 암호 연산 4 클래스
    - low_end: 16 MHz 클럭의 18차 고조파(288 MHz), 프로그램 10 클래스
      prog1~prog3은 prog0과 |f| > 0.5 MHz 톤 하나씩만 달라서, 0.5 MHz까지 다운샘플링하면 구분이 사라진다.
    """
    # 잡음 -30 dB는 합성 데이터용 보정값 (실측 SNR 아님)
    high_end = EmitterProfile(
        name='high_end',
        carrier_freq_hz=1.4e9,
        harmonic_index=1,
        noise_floor_db=-30.0,
        impulse_rate_hz=20.0,
        impulse_gain_db=6.0,
        adc_bits=8,
        classes=(
            ProgramClassSpec('other', ((150e3, 0.30), (420e3, 0.10))),
            ProgramClassSpec('aes256', ((250e3, 0.30), (1.3e6, 0.15))),
            ProgramClassSpec('aes128', ((250e3, 0.30), (0.9e6, 0.15))),
            ProgramClassSpec('3des', ((330e3, 0.25), (2.1e6, 0.12))),
        ),
    )

    base = ((60e3, 0.40), (180e3, 0.20))
    low_end = EmitterProfile(
        name='low_end',
        carrier_freq_hz=16e6,
        harmonic_index=18,
        noise_floor_db=-30.0,
        impulse_rate_hz=50.0,
        impulse_gain_db=6.0,
        adc_bits=8,
        classes=(
            ProgramClassSpec('prog0', base),
            ProgramClassSpec('prog1', base + ((600e3, 0.20),)),
            ProgramClassSpec('prog2', base + ((700e3, 0.20),)),
            ProgramClassSpec('prog3', base + ((800e3, 0.20),)),
            ProgramClassSpec('prog4', ((60e3, 0.40), (240e3, 0.20))),
            ProgramClassSpec('prog5', ((90e3, 0.40), (180e3, 0.20))),
            ProgramClassSpec('prog6', ((90e3, 0.40), (300e3, 0.25))),
            ProgramClassSpec('prog7', ((120e3, 0.35), (360e3, 0.20))),
            ProgramClassSpec('prog8', ((150e3, 0.35), (450e3, 0.20), (1.5e6, 0.10))),
            ProgramClassSpec('prog9', ((200e3, 0.30), (2.5e6, 0.15))),
        ),
    )
    return high_end, low_end


def tampered_variants(
    profile: EmitterProfile,
    base_class: str,
    count: int,
    seed: int,
) -> list[ProgramClassSpec]:
    """base_class에서 파생한 '변조 펌웨어' 클래스 count개

    변형 종류를 순환: 톤 추가 / 기존 톤 주파수 이동 / 기존 톤 약화 + 약한 톤 추가
    """
    if count < 0:
        raise InvalidArgumentError(f"count는 음수일 수 없습니다: {count}")
    base = profile.get_class(base_class)
    rng = _generator(seed, class_key(base_class), 0xF1A5)
    tones = list(base.envelope_tones)
    variants: list[ProgramClassSpec] = []
    for i in range(count):
        kind = i % 3
        # 기존 톤에서 20 kHz 이상 떨어진 새 주파수 (0.1 ~ 2.4 MHz, 1 kHz 단위)
        new_f = float(np.round(100e3 + rng.random() * 2.3e6, -3))
        while min(abs(new_f - f) for f, _ in tones) < 20e3:
            new_f = float(np.round(100e3 + rng.random() * 2.3e6, -3))
        if kind == 0:
            new_tones = tones + [(new_f, 0.15)]
        elif kind == 1:
            j = i % len(tones)
            f, a = tones[j]
            shift = (20e3 + 10e3 * i) * (1 if rng.random() < 0.5 else -1)
            shifted = abs(f + shift) or 20e3
            new_tones = tones[:j] + [(shifted, a)] + tones[j + 1:]
        else:
            j = i % len(tones)
            f, a = tones[j]
            new_tones = tones[:j] + [(f, a * 0.5)] + tones[j + 1:] + [(new_f, 0.08)]
        variants.append(ProgramClassSpec(f'{base_class}-mod{i:02d}', tuple(new_tones), base.duty_pattern))
    return variants

