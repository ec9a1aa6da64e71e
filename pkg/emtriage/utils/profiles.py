"""
EmitterProfile 파일 입출력

형식 (UTF-8, schema_version=1):

    # 주석
    schema_version=1
    name=low_end
    carrier_freq_hz=16000000.0
    harmonic_index=18
    noise_floor_db=-30.0
    impulse_rate_hz=50.0
    impulse_gain_db=6.0
    adc_bits=8

    [class prog0]
    tones=60000.0:0.4,180000.0:0.2
    duty=0.001:0.5            (선택: period_s:on_fraction)
"""
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Union

from emtriage.errors import EmTriageError, ProfileFormatError
from emtriage.models import EmitterProfile, ProgramClassSpec
from emtriage.utils.emitter import default_profiles

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
_HEADER_KEYS = (
    'name', 'carrier_freq_hz', 'harmonic_index', 'noise_floor_db',
    'impulse_rate_hz', 'impulse_gain_db', 'adc_bits',
)


def builtin_profiles() -> dict[str, EmitterProfile]:
    high_end, low_end = default_profiles()
    return {high_end.name: high_end, low_end.name: low_end}


def dumps_profile(profile: EmitterProfile) -> str:
    lines = [
        '# emtriage emitter profile',
        f'schema_version={SCHEMA_VERSION}',
        f'name={profile.name}',
        f'carrier_freq_hz={profile.carrier_freq_hz!r}',
        f'harmonic_index={profile.harmonic_index}',
        f'noise_floor_db={profile.noise_floor_db!r}',
        f'impulse_rate_hz={profile.impulse_rate_hz!r}',
        f'impulse_gain_db={profile.impulse_gain_db!r}',
        f'adc_bits={profile.adc_bits}',
    ]
    for spec in profile.classes:
        lines.append('')
        lines.append(f'[class {spec.class_id}]')
        lines.append('tones=' + ','.join(f'{float(f)!r}:{float(a)!r}' for f, a in spec.envelope_tones))
        if spec.duty_pattern is not None:
            period, on_fraction = spec.duty_pattern
            lines.append(f'duty={float(period)!r}:{float(on_fraction)!r}')
    return '\n'.join(lines) + '\n'


def _pair(value: str, where: str) -> tuple[float, float]:
    if ':' not in value:
        raise ProfileFormatError(f"'a:b' 형식이어야 합니다 ({where}): {value!r}")
    a, b = value.split(':', 1)
    try:
        return float(a), float(b)
    except ValueError as e:
        raise ProfileFormatError(f"숫자 파싱 실패 ({where}): {value!r}") from e


def loads_profile(text: str, source: str = '<string>') -> EmitterProfile:
    header: dict[str, str] = {}
    classes: list[dict[str, str]] = []
    current: dict[str, str] | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        where = f'{source}:{lineno}'
        if line.startswith('[') and line.endswith(']'):
            parts = line[1:-1].split(None, 1)
            if len(parts) != 2 or parts[0] != 'class':
                raise ProfileFormatError(f"섹션 헤더는 '[class <id>]' 형식이어야 합니다 ({where})")
            current = {'class_id': parts[1].strip(), '_where': where}
            classes.append(current)
            continue
        if '=' not in line:
            raise ProfileFormatError(f"'key=value' 형식이 아닙니다 ({where}): {line!r}")
        key, value = (s.strip() for s in line.split('=', 1))
        (current if current is not None else header)[key] = value

    version = header.get('schema_version')
    if version != str(SCHEMA_VERSION):
        raise ProfileFormatError(f"지원하지 않는 schema_version: {version!r} ({source}, 지원: {SCHEMA_VERSION})")
    missing = [k for k in _HEADER_KEYS if k not in header and k != 'adc_bits']
    if missing:
        raise ProfileFormatError(f"필수 키 누락 ({source}): {', '.join(missing)}")

    specs = []
    for block in classes:
        where = block['_where']
        if 'tones' not in block:
            raise ProfileFormatError(f"클래스 {block['class_id']!r}에 tones가 없습니다 ({where})")
        tones = tuple(_pair(t.strip(), where) for t in block['tones'].split(',') if t.strip())
        duty = _pair(block['duty'], where) if 'duty' in block else None
        try:
            specs.append(ProgramClassSpec(block['class_id'], tones, duty))
        except EmTriageError as e:
            raise ProfileFormatError(f"{where}: {e}") from e

    try:
        return EmitterProfile(
            name=header['name'],
            carrier_freq_hz=float(header['carrier_freq_hz']),
            harmonic_index=int(header['harmonic_index']),
            noise_floor_db=float(header['noise_floor_db']),
            impulse_rate_hz=float(header['impulse_rate_hz']),
            impulse_gain_db=float(header['impulse_gain_db']),
            adc_bits=int(header.get('adc_bits', '0')),
            classes=tuple(specs),
        )
    except ValueError as e:
        raise ProfileFormatError(f"{source}: {e}") from e


def save_profile(profile: EmitterProfile, path: Union[str, os.PathLike]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_profile(profile), encoding='utf-8')
    return path


def load_profile(path: Union[str, os.PathLike]) -> EmitterProfile:
    path = Path(path)
    return loads_profile(path.read_text(encoding='utf-8'), source=str(path))


def resolve_profile(name_or_path: str) -> EmitterProfile:
    """내장 프로파일 이름(high_end/low_end) 또는 프로파일 파일 경로"""
    builtins = builtin_profiles()
    if name_or_path in builtins:
        return builtins[name_or_path]
    path = Path(name_or_path)
    if not path.exists():
        raise ProfileFormatError(
            f"프로파일을 찾을 수 없습니다: {name_or_path!r} (내장: {', '.join(sorted(builtins))})"
        )
    logger.info(f'프로파일 로드: {path}')
    return load_profile(path)
