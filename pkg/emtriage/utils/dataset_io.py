"""
특징 데이터셋 내보내기 / 불러오기

- `<path>.hdr`  UTF-8 key=value (format_version, rows, cols, dtype, label_dtype, classes)
- `<path>.bin`  row-major float64-le 행렬 뒤에 int32-le 라벨 벡터
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Union

import numpy as np

from emtriage.errors import InvalidDatasetError
from emtriage.models import Dataset

FORMAT_VERSION = 1
_MATRIX_DTYPE = np.dtype('<f8')
_LABEL_DTYPE = np.dtype('<i4')

PathLike = Union[str, os.PathLike]


def _paths(path: PathLike) -> tuple[Path, Path]:
    p = Path(path)
    return p.with_name(p.name + '.hdr'), p.with_name(p.name + '.bin')


def save_dataset(dataset: Dataset, path: PathLike) -> tuple[Path, Path]:
    hdr_path, bin_path = _paths(path)
    hdr_path.parent.mkdir(parents=True, exist_ok=True)
    for name in dataset.class_table:
        if ',' in name or '\n' in name:
            raise InvalidDatasetError(f"클래스 이름에 ',' 또는 줄바꿈을 쓸 수 없습니다: {name!r}")

    header = [
        f'format_version={FORMAT_VERSION}',
        f'rows={dataset.n_rows}',
        f'cols={dataset.feature_dim}',
        'dtype=float64-le',
        'label_dtype=int32-le',
        'classes=' + ','.join(dataset.class_table),
    ]
    hdr_path.write_text('\n'.join(header) + '\n', encoding='utf-8')
    with bin_path.open('wb') as f:
        f.write(np.ascontiguousarray(dataset.X, dtype=_MATRIX_DTYPE).tobytes())
        f.write(dataset.y.astype(_LABEL_DTYPE).tobytes())
    return hdr_path, bin_path


def load_dataset(path: PathLike) -> Dataset:
    hdr_path, bin_path = _paths(path)
    if not hdr_path.exists() or not bin_path.exists():
        raise InvalidDatasetError(f"데이터셋 파일이 없습니다: {hdr_path} / {bin_path}")

    meta = {}
    for line in hdr_path.read_text(encoding='utf-8').splitlines():
        if '=' in line:
            k, v = line.split('=', 1)
            meta[k.strip()] = v.strip()
    try:
        if int(meta['format_version']) != FORMAT_VERSION:
            raise InvalidDatasetError(f"지원하지 않는 데이터셋 버전: {meta['format_version']}")
        rows, cols = int(meta['rows']), int(meta['cols'])
    except (KeyError, ValueError) as e:
        raise InvalidDatasetError(f"데이터셋 헤더 오류: {hdr_path}: {e}") from e
    classes = tuple(c for c in meta.get('classes', '').split(',') if c)

    raw = bin_path.read_bytes()
    expected = rows * cols * _MATRIX_DTYPE.itemsize + rows * _LABEL_DTYPE.itemsize
    if len(raw) != expected:
        raise InvalidDatasetError(f"데이터셋 크기 불일치: {bin_path} (expected={expected}, actual={len(raw)})")
    split = rows * cols * _MATRIX_DTYPE.itemsize
    X = np.frombuffer(raw[:split], dtype=_MATRIX_DTYPE).reshape(rows, cols)
    y = np.frombuffer(raw[split:], dtype=_LABEL_DTYPE).astype(np.int64)
    return Dataset(X=X, y=y, class_table=classes)
