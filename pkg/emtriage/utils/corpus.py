"""
트레이스 코퍼스 관리

디렉토리 구조:
    <root>/manifest.tsv
    <root>/<label>/<seq>.cf32
    <root>/<label>/<seq>.cf32.meta

manifest.tsv:
    1행  '# emtriage-manifest v<version>'
    2행~ 탭 구분 테이블 (path, label, sample_rate_hz, center_freq_hz, duration_s, seed, n_bytes)
    path는 root 기준 상대 경로
"""
from __future__ import annotations

import logging
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence, Union

import numpy as np
import pandas as pd

from emtriage.errors import CorpusError, EmTriageError, InsufficientSamplesError, InvalidArgumentError
from emtriage.models import MANIFEST_FORMAT_VERSION, CorpusManifest, EmitterProfile, IQTrace, ManifestEntry
from emtriage.utils.emitter import class_key, synth_trace
from emtriage.utils.resample import DEFAULT_NUMTAPS, downsample
from emtriage.utils.trace_io import read_sidecar, read_trace, sidecar_path, write_trace

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.tsv'
_HEADER_PREFIX = '# emtriage-manifest v'
_COLUMNS = ['path', 'label', 'sample_rate_hz', 'center_freq_hz', 'duration_s', 'seed', 'n_bytes']

PathLike = Union[str, os.PathLike]


def trace_seed(seed: int, label: str, index: int) -> int:
    """코퍼스 내 트레이스별 seed (seed, 라벨, 순번에서 결정적으로 유도)"""
    ss = np.random.SeedSequence(int(seed), spawn_key=(class_key(label), int(index)))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def relative_trace_path(label: str, index: int) -> str:
    return f'{label}/{index:04d}.cf32'


# ------------------------------------------------------------
# manifest
# ------------------------------------------------------------

def manifest_path(root_or_file: PathLike) -> Path:
    p = Path(root_or_file)
    return p / MANIFEST_NAME if p.is_dir() or p.suffix != '.tsv' else p


def write_manifest(manifest: CorpusManifest, path: Optional[PathLike] = None) -> Path:
    """manifest를 한 번에 기록 (임시 파일 → rename)"""
    path = Path(path) if path is not None else manifest.root / MANIFEST_NAME
    df = pd.DataFrame(
        [
            {
                'path': e.path,
                'label': e.label,
                'sample_rate_hz': float(e.sample_rate_hz),
                'center_freq_hz': float(e.center_freq_hz),
                'duration_s': float(e.duration_s),
                'seed': e.seed,
                'n_bytes': int(e.n_bytes),
            }
            for e in manifest.entries
        ],
        columns=_COLUMNS,
    )
    df['seed'] = df['seed'].astype('Int64')

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name('.' + path.name + '.tmp')
    with tmp.open('w', encoding='utf-8', newline='') as f:
        f.write(f'{_HEADER_PREFIX}{manifest.format_version}\n')
        df.to_csv(f, sep='\t', index=False, lineterminator='\n')
    tmp.replace(path)
    return path


def load_manifest(root_or_file: PathLike) -> CorpusManifest:
    path = manifest_path(root_or_file)
    if not path.exists():
        raise CorpusError(f"manifest가 없습니다: {path}")
    with path.open('r', encoding='utf-8') as f:
        header = f.readline().strip()
    if not header.startswith(_HEADER_PREFIX):
        raise CorpusError(f"manifest 헤더가 없습니다: {path}")
    try:
        version = int(header[len(_HEADER_PREFIX):])
    except ValueError as e:
        raise CorpusError(f"manifest 버전 오류: {path}: {header!r}") from e
    if version != MANIFEST_FORMAT_VERSION:
        raise CorpusError(f"지원하지 않는 manifest 버전: {path} (v{version})")

    try:
        df = pd.read_csv(
            path, sep='\t', skiprows=1, dtype={'path': str, 'label': str, 'seed': 'Int64', 'n_bytes': 'int64'},
            keep_default_na=False, na_values={'seed': ['']},
        )
    except (ValueError, pd.errors.ParserError) as e:
        raise CorpusError(f"manifest 파싱 실패: {path}: {e}") from e
    missing = [c for c in _COLUMNS if c not in df.columns]
    if missing:
        raise CorpusError(f"manifest 컬럼 누락: {path}: {', '.join(missing)}")

    entries = []
    for row in df.itertuples(index=False):
        try:
            entries.append(ManifestEntry(
                path=row.path,
                label=row.label,
                sample_rate_hz=float(row.sample_rate_hz),
                center_freq_hz=float(row.center_freq_hz),
                duration_s=float(row.duration_s),
                seed=None if pd.isna(row.seed) else int(row.seed),
                n_bytes=int(row.n_bytes),
            ))
        except InvalidArgumentError as e:
            raise CorpusError(f"manifest 행 오류: {path}: {e}") from e
    return CorpusManifest(root=path.parent, entries=tuple(entries), format_version=version)


def entry_for(trace: IQTrace, rel_path: str) -> ManifestEntry:
    return ManifestEntry(
        path=rel_path,
        label=trace.label or '',
        sample_rate_hz=trace.sample_rate_hz,
        center_freq_hz=trace.center_freq_hz,
        duration_s=trace.duration_seconds,
        seed=trace.seed,
        n_bytes=trace.payload_bytes,
    )


def iter_traces(manifest: CorpusManifest, labels: Optional[Iterable[str]] = None) -> Iterator[IQTrace]:
    """manifest 순서대로 트레이스를 읽는다. extra['path']에 상대 경로를 넣어 준다."""
    wanted = set(labels) if labels is not None else None
    for e in manifest.entries:
        if wanted is not None and e.label not in wanted:
            continue
        trace = read_trace(manifest.root / e.path)
        yield replace(trace, extra={**trace.extra, 'path': e.path})


def verify_corpus(manifest: CorpusManifest) -> list[str]:
    """manifest ↔ 디스크 일치 검사. 문제 목록(경로 포함) 반환, 비어 있으면 정상."""
    problems = []
    for e in manifest.entries:
        payload = manifest.root / e.path
        if not payload.exists():
            problems.append(f'{e.path}: payload 없음')
            continue
        size = payload.stat().st_size
        if size != e.n_bytes:
            problems.append(f'{e.path}: 크기 불일치 (manifest={e.n_bytes}, disk={size})')
        if not sidecar_path(payload).exists():
            problems.append(f'{e.path}: sidecar 없음')
            continue
        try:
            meta = read_sidecar(payload) or {}
        except EmTriageError as err:
            problems.append(f'{e.path}: {err}')
            continue
        if meta.get('label') != e.label:
            problems.append(f"{e.path}: 라벨 불일치 (manifest={e.label}, sidecar={meta.get('label')})")
        try:
            rate = float(meta.get('sample_rate_hz', 'nan'))
        except ValueError:
            rate = float('nan')
        if rate != e.sample_rate_hz:
            problems.append(f"{e.path}: sample_rate 불일치 (manifest={e.sample_rate_hz:g}, sidecar={meta.get('sample_rate_hz')})")
    return problems


# ------------------------------------------------------------
# 생성 / 변환
# ------------------------------------------------------------

def _run_jobs(jobs: Sequence, fn: Callable, workers: int, created: list[Path]) -> list[ManifestEntry]:
    def _wrapped(job):
        entry = fn(job)
        created.append(Path(job[-1]))
        return entry

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_wrapped, jobs))
    return [_wrapped(job) for job in jobs]


def _cleanup(root: Path, created: list[Path], root_existed: bool) -> None:
    for payload in created:
        for p in (payload, sidecar_path(payload)):
            try:
                p.unlink()
            except OSError:
                pass
    for p in sorted({c.parent for c in created}, reverse=True):
        try:
            p.rmdir()
        except OSError:
            pass
    if not root_existed:
        shutil.rmtree(root, ignore_errors=True)
    logger.warning(f'부분 생성된 코퍼스 정리: {root} ({len(created)} files)')


def build_corpus(
    profile: EmitterProfile,
    per_class: int,
    duration_s: float,
    rate_hz: float,
    seed: int,
    root: PathLike,
    workers: int = 1,
    classes: Optional[Sequence[str]] = None,
) -> CorpusManifest:
    """프로파일의 클래스마다 per_class개 트레이스 생성 → payload + sidecar + manifest"""
    if per_class < 1:
        raise InvalidArgumentError(f"per_class는 1 이상이어야 합니다: {per_class}")
    root = Path(root)
    class_ids = list(classes) if classes else profile.class_ids
    for c in class_ids:
        profile.get_class(c)

    jobs = [
        (c, i, root / relative_trace_path(c, i))
        for c in class_ids
        for i in range(per_class)
    ]

    def _make(job) -> ManifestEntry:
        class_id, index, path = job
        trace = synth_trace(profile, class_id, duration_s, rate_hz, trace_seed(seed, class_id, index))
        write_trace(trace, path)
        return entry_for(trace, relative_trace_path(class_id, index))

    root_existed = root.exists()
    created: list[Path] = []
    try:
        root.mkdir(parents=True, exist_ok=True)
        entries = _run_jobs(jobs, _make, workers, created)
        manifest = CorpusManifest(root=root, entries=tuple(entries))
        write_manifest(manifest)
    except OSError as e:
        _cleanup(root, created, root_existed)
        raise CorpusError(f"코퍼스 생성 실패: {root}: {e}") from e
    except BaseException:
        _cleanup(root, created, root_existed)
        raise

    logger.info(
        f'코퍼스 생성 완료: {root} profile={profile.name} classes={len(class_ids)} '
        f'traces={len(manifest)} bytes={manifest.total_bytes:,}'
    )
    return manifest


def resample_corpus(
    manifest: CorpusManifest,
    target_rate_hz: float,
    dest_root: PathLike,
    workers: int = 1,
    numtaps: int = DEFAULT_NUMTAPS,
) -> CorpusManifest:
    """모든 엔트리를 target_rate_hz로 다운샘플링한 새 코퍼스. 같은 rate면 그대로 복사."""
    dest_root = Path(dest_root)
    if dest_root.resolve() == manifest.root.resolve():
        raise InvalidArgumentError(f"출력 코퍼스 경로가 원본과 같습니다: {dest_root}")
    for e in manifest.entries:
        if target_rate_hz > e.sample_rate_hz:
            raise InvalidArgumentError(
                f"업샘플링은 지원하지 않습니다: {e.path} ({e.sample_rate_hz:g} Hz → {target_rate_hz:g} Hz)"
            )

    jobs = [(e, dest_root / e.path) for e in manifest.entries]

    def _convert(job) -> ManifestEntry:
        entry, out_path = job
        src = manifest.root / entry.path
        if entry.sample_rate_hz == target_rate_hz:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(src, out_path)
            shutil.copyfile(sidecar_path(src), sidecar_path(out_path))
            return entry
        trace = downsample(read_trace(src), target_rate_hz, numtaps=numtaps)
        write_trace(trace, out_path)
        return entry_for(trace, entry.path)

    root_existed = dest_root.exists()
    created: list[Path] = []
    try:
        dest_root.mkdir(parents=True, exist_ok=True)
        entries = _run_jobs(jobs, _convert, workers, created)
        out = CorpusManifest(root=dest_root, entries=tuple(entries), format_version=manifest.format_version)
        write_manifest(out)
    except OSError as e:
        _cleanup(dest_root, created, root_existed)
        raise CorpusError(f"코퍼스 리샘플링 실패: {dest_root}: {e}") from e
    except BaseException:
        _cleanup(dest_root, created, root_existed)
        raise

    ratio = out.total_bytes / manifest.total_bytes if manifest.total_bytes else 0.0
    logger.info(
        f'코퍼스 리샘플링 완료: {dest_root} rate={target_rate_hz:g} Hz '
        f'bytes={out.total_bytes:,} ({ratio:.1%} of source)'
    )
    return out


def split(manifest: CorpusManifest, train_fraction: float, seed: int) -> tuple[CorpusManifest, CorpusManifest]:
    """라벨별 계층화 train/test 분할 (seed 고정 시 결정적, 서로소, 합집합 = 원본)"""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidArgumentError(f"train_fraction은 (0, 1) 범위여야 합니다: {train_fraction}")

    groups: dict[str, list[int]] = {}
    for i, e in enumerate(manifest.entries):
        groups.setdefault(e.label, []).append(i)

    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    for label in sorted(groups):
        idx = groups[label]
        n = len(idx)
        if n < 2:
            raise InsufficientSamplesError(label, n, 2)
        n_train = min(max(int(round(train_fraction * n)), 1), n - 1)
        perm = rng.permutation(n)
        train_idx.extend(idx[k] for k in perm[:n_train])

    chosen = set(train_idx)
    train_entries = tuple(e for i, e in enumerate(manifest.entries) if i in chosen)
    test_entries = tuple(e for i, e in enumerate(manifest.entries) if i not in chosen)
    return (
        CorpusManifest(root=manifest.root, entries=train_entries, format_version=manifest.format_version),
        CorpusManifest(root=manifest.root, entries=test_entries, format_version=manifest.format_version),
    )
