"""
모델 파일 공통 바이너리 컨테이너

    magic (8 bytes) | version (u16 le) | header_len (u32 le) | header (UTF-8 JSON)
    | float64-le 배열들 (header['arrays']의 shape 순서, row-major)

파일 크기가 header가 선언한 배열 크기와 정확히 같아야 한다.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np

from emtriage.errors import ModelFormatError

_PREFIX = struct.Struct('<8sHI')
_F64 = np.dtype('<f8')

PathLike = Union[str, os.PathLike]


def write_container(
    path: PathLike,
    magic: bytes,
    version: int,
    header: dict[str, Any],
    arrays: Sequence[np.ndarray],
) -> Path:
    path = Path(path)
    if len(magic) != 8:
        raise ValueError('magic은 8바이트여야 합니다')
    header = dict(header)
    header['arrays'] = [list(np.shape(a)) for a in arrays]
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode('utf-8')

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name('.' + path.name + '.tmp')
    with tmp.open('wb') as f:
        f.write(_PREFIX.pack(magic, version, len(blob)))
        f.write(blob)
        for a in arrays:
            f.write(np.ascontiguousarray(a, dtype=_F64).tobytes())
    tmp.replace(path)
    return path


def read_container(path: PathLike, magic: bytes, version: int) -> tuple[dict[str, Any], list[np.ndarray]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ModelFormatError(f"모델 파일을 읽을 수 없습니다: {path}: {e}") from e

    if len(raw) < _PREFIX.size:
        raise ModelFormatError(f"모델 파일이 너무 짧습니다: {path} ({len(raw)} bytes)")
    file_magic, file_version, header_len = _PREFIX.unpack_from(raw, 0)
    if file_magic != magic:
        raise ModelFormatError(f"모델 파일 magic 불일치: {path} ({file_magic!r} != {magic!r})")
    if file_version != version:
        raise ModelFormatError(f"지원하지 않는 모델 포맷 버전: {path} (file={file_version}, supported={version})")

    offset = _PREFIX.size
    if len(raw) < offset + header_len:
        raise ModelFormatError(f"모델 헤더가 잘렸습니다: {path}")
    try:
        header = json.loads(raw[offset:offset + header_len].decode('utf-8'))
        shapes = [tuple(int(d) for d in s) for s in header['arrays']]
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as e:
        raise ModelFormatError(f"모델 헤더 파싱 실패: {path}: {e}") from e
    offset += header_len

    expected = offset + sum(int(np.prod(s, dtype=np.int64)) for s in shapes) * _F64.itemsize
    if len(raw) != expected:
        raise ModelFormatError(f"모델 파일 크기 불일치 (잘림/손상): {path} (expected={expected}, actual={len(raw)})")

    arrays = []
    for shape in shapes:
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(raw, dtype=_F64, count=count, offset=offset).reshape(shape).copy()
        arrays.append(arr)
        offset += count * _F64.itemsize
    return header, arrays
