"""
cf32 트레이스 파일 입출력

- payload: `<name>.cf32`  헤더 없는 little-endian float32 I,Q 인터리브
- sidecar: `<name>.cf32.meta`  UTF-8 `key=value` 줄 (알 수 없는 키는 재기록 시 보존)
"""
from __future__ import annotations

import errno
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

import numpy as np

from emtriage.errors import CorruptSampleError, InvalidArgumentError, MalformedTraceError
from emtriage.models import BYTES_PER_SAMPLE, IQTrace

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

_KNOWN_KEYS = ('sample_rate_hz', 'center_freq_hz', 'label', 'seed', 'captured_at')
_WIRE_DTYPE = np.dtype('<f4')


def sidecar_path(path: PathLike) -> Path:
    return Path(str(path) + '.meta')


def encode_samples(samples: np.ndarray) -> bytes:
    """complex 샘플 → cf32 바이트 (스트림 전송에도 사용)"""
    samples = np.asarray(samples, dtype=np.complex64).reshape(-1)
    buf = np.empty(2 * samples.shape[0], dtype=_WIRE_DTYPE)
    buf[0::2] = samples.real
    buf[1::2] = samples.imag
    return buf.tobytes()


def decode_samples(raw: Union[bytes, bytearray, memoryview, np.ndarray]) -> np.ndarray:
    """cf32 바이트 → complex64 배열. 길이는 8의 배수여야 한다."""
    floats = np.frombuffer(raw, dtype=_WIRE_DTYPE) if not isinstance(raw, np.ndarray) else raw.astype(_WIRE_DTYPE, copy=False)
    if floats.shape[0] % 2:
        raise MalformedTraceError(f"I/Q 쌍이 맞지 않습니다: float 개수={floats.shape[0]}")
    out = np.empty(floats.shape[0] // 2, dtype=np.complex64)
    out.real = floats[0::2]
    out.imag = floats[1::2]
    return out


def first_non_finite(samples: np.ndarray) -> Optional[int]:
    """첫 번째 NaN/Inf 샘플 인덱스 (없으면 None)"""
    bad = ~np.isfinite(samples)
    if not bad.any():
        return None
    return int(np.argmax(bad))


# ------------------------------------------------------------
# sidecar
# ------------------------------------------------------------

def _format_float(value: float) -> str:
    # repr은 float 왕복이 정확함
    return repr(float(value))


def write_sidecar(trace: IQTrace, path: PathLike) -> Path:
    meta_path = sidecar_path(path)
    lines = [
        f'sample_rate_hz={_format_float(trace.sample_rate_hz)}',
        f'center_freq_hz={_format_float(trace.center_freq_hz)}',
    ]
    if trace.label is not None:
        lines.append(f'label={trace.label}')
    if trace.seed is not None:
        lines.append(f'seed={int(trace.seed)}')
    if trace.captured_at is not None:
        lines.append(f'captured_at={trace.captured_at.isoformat()}')
    for key in sorted(trace.extra):
        if key in _KNOWN_KEYS:
            continue
        lines.append(f'{key}={trace.extra[key]}')

    tmp = meta_path.with_name('.' + meta_path.name + '.tmp')
    tmp.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    tmp.replace(meta_path)
    return meta_path


def read_sidecar(path: PathLike) -> Optional[dict[str, str]]:
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        return None
    meta: dict[str, str] = {}
    # 값은 줄 끝 문자만 떼고 그대로 둔다 (label 공백 보존)
    for lineno, line in enumerate(meta_path.read_text(encoding='utf-8').split('\n'), start=1):
        line = line.rstrip('\r')
        if not line.strip() or line.lstrip().startswith('#'):
            continue
        if '=' not in line:
            raise MalformedTraceError(f"sidecar 형식 오류 ({meta_path}:{lineno}): {line!r}")
        key, value = line.split('=', 1)
        meta[key.strip()] = value
    return meta


def _parse_captured_at(value: str) -> datetime:
    # RFC-3339의 'Z' 접미사 허용
    if value.endswith('Z'):
        value = value[:-1] + '+00:00'
    return datetime.fromisoformat(value)


# ------------------------------------------------------------
# payload
# ------------------------------------------------------------

def read_trace(
    path: PathLike,
    sample_rate_hz: Optional[float] = None,
    center_freq_hz: Optional[float] = None,
    label: Optional[str] = None,
) -> IQTrace:
    """cf32 payload(+sidecar)를 IQTrace로 읽는다.

    sidecar가 없으면 sample_rate_hz는 호출자가 넘겨야 하며 그 값이 기록된다.
    """
    path = Path(path)
    try:
        size = path.stat().st_size
    except OSError as e:
        raise OSError(e.errno or errno.EIO, f"트레이스 파일을 읽을 수 없습니다: {path}: {e.strerror}") from e
    if size % BYTES_PER_SAMPLE:
        raise MalformedTraceError(f"잘린 트레이스 파일: {path} (size={size}, 8의 배수 아님)")

    meta = read_sidecar(path)
    extra: dict[str, str] = {}
    seed = None
    captured_at = None
    if meta is not None:
        try:
            rate = float(meta['sample_rate_hz'])
            fc = float(meta.get('center_freq_hz', '0.0'))
            seed = int(meta['seed']) if 'seed' in meta else None
            captured_at = _parse_captured_at(meta['captured_at']) if 'captured_at' in meta else None
        except (KeyError, ValueError) as e:
            raise MalformedTraceError(f"sidecar 값 오류: {sidecar_path(path)}: {e}") from e
        label = meta.get('label', label)
        extra = {k: v for k, v in meta.items() if k not in _KNOWN_KEYS}
        if sample_rate_hz is not None and float(sample_rate_hz) != rate:
            logger.warning(f'sidecar의 sample_rate_hz({rate:g})가 인자({sample_rate_hz:g})보다 우선합니다: {path}')
    else:
        if sample_rate_hz is None:
            raise InvalidArgumentError(f"sidecar가 없으므로 sample_rate_hz를 지정해야 합니다: {path}")
        rate = float(sample_rate_hz)
        fc = float(center_freq_hz or 0.0)

    try:
        floats = np.fromfile(path, dtype=_WIRE_DTYPE)
    except OSError as e:
        raise OSError(e.errno or errno.EIO, f"트레이스 파일을 읽을 수 없습니다: {path}: {e.strerror}") from e

    bad = first_non_finite(floats)
    if bad is not None:
        raise CorruptSampleError(bad // 2, str(path))

    samples = decode_samples(floats)
    logger.debug(f'트레이스 읽기: {path} ({samples.shape[0]} samples @ {rate:g} Hz)')
    try:
        return IQTrace(
            samples=samples,
            sample_rate_hz=rate,
            center_freq_hz=fc,
            label=label,
            seed=seed,
            captured_at=captured_at,
            extra=extra,
        )
    except InvalidArgumentError as e:
        if meta is None:
            raise
        raise MalformedTraceError(f"sidecar 값 오류: {sidecar_path(path)}: {e}") from e


def write_trace(trace: IQTrace, path: PathLike) -> Path:
    """IQTrace를 cf32 payload + sidecar로 기록 (read_trace의 역연산)"""
    path = Path(path)
    bad = first_non_finite(trace.samples)
    if bad is not None:
        raise CorruptSampleError(bad, str(path))

    tmp = path.with_name('.' + path.name + '.tmp')
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with tmp.open('wb') as f:
            f.write(encode_samples(trace.samples))
        tmp.replace(path)
        write_sidecar(trace, path)
    except OSError as e:
        for leftover in (tmp, sidecar_path(path).with_name('.' + sidecar_path(path).name + '.tmp')):
            try:
                leftover.unlink(missing_ok=True)
            except OSError:
                pass
        raise OSError(e.errno or errno.EIO, f"트레이스 파일을 쓸 수 없습니다: {path}: {e.strerror}") from e

    logger.debug(f'트레이스 쓰기: {path} ({trace.payload_bytes} bytes)')
    return path
