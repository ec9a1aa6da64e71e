"""
결과 파일 출력 (CSV / 선택적 XLSX / verb별 JSON)

같은 seed로 다시 실행하면 CSV가 바이트 단위로 같아야 하므로
실수는 항상 소수점 6자리로 고정하고 시각/경과 시간은 JSON에만 남긴다.
"""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Mapping, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.6f'

PathLike = Union[str, os.PathLike]


def write_csv(df: pd.DataFrame, out_dir: PathLike, name: str, index: bool = False) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f'{name}.csv'
    df.to_csv(path, index=index, float_format=FLOAT_FORMAT, lineterminator='\n', encoding='utf-8')
    logger.info(f'결과 저장: {path}')
    return path


def write_xlsx(tables: Mapping[str, pd.DataFrame], out_dir: PathLike, name: str) -> Path:
    """시트 이름 → 테이블 (openpyxl 엔진)"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f'{name}.xlsx'
    with pd.ExcelWriter(path, engine='openpyxl') as writer:
        for sheet, df in tables.items():
            # 엑셀 시트 이름은 31자 제한
            df.to_excel(writer, sheet_name=sheet[:31], index=df.index.name is not None)
    logger.info(f'결과 저장: {path}')
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(payload: Mapping[str, Any], out_dir: PathLike, verb: str) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f'{verb}.json'
    path.write_text(
        json.dumps(_jsonable(payload), ensure_ascii=False, indent=2, sort_keys=True) + '\n',
        encoding='utf-8',
    )
    logger.info(f'결과 저장: {path}')
    return path
