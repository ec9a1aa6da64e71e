"""
데이터 verb: synth / corpus / resample / features / verify / psd / budget
"""
from __future__ import annotations

import logging
from pathlib import Path

import pandas as pd

from emtriage.errors import AcceptanceError, InvalidArgumentError
from emtriage.models import ClassSchedule
from emtriage.commands import (
    add_feature_args, add_results, add_seed, add_workers, feature_config_from_args, parse_rate, results_dir,
)
from emtriage.utils.corpus import build_corpus, iter_traces, load_manifest, resample_corpus, split, verify_corpus
from emtriage.utils.dataset_io import save_dataset
from emtriage.utils.emitter import synth_crypto_session, synth_scheduled, synth_trace
from emtriage.utils.features import batch_features, power_spectral_density
from emtriage.utils.profiles import resolve_profile
from emtriage.utils.results import write_csv, write_json
from emtriage.utils.storage import REFERENCE_DURATION_S, REFERENCE_RATE_HZ, describe_budget, storage_budget
from emtriage.utils.trace_io import read_trace, write_trace

logger = logging.getLogger(__name__)


def _mhz(rate_hz: float) -> str:
    return f'{rate_hz / 1e6:g} MHz'


# ------------------------------------------------------------
# synth
# ------------------------------------------------------------

def cmd_synth(args, cfg) -> int:
    profile = resolve_profile(args.profile)
    if args.schedule:
        trace = synth_scheduled(profile, ClassSchedule.parse(args.schedule), args.duration, args.rate, args.seed)
    elif not args.class_id:
        raise InvalidArgumentError(f"--class 또는 --schedule이 필요합니다 (클래스: {', '.join(profile.class_ids)})")
    elif args.bursts:
        trace = synth_crypto_session(
            profile, args.class_id, args.bursts, args.gap_ms / 1000.0, args.duration, args.rate, args.seed
        )
    else:
        trace = synth_trace(profile, args.class_id, args.duration, args.rate, args.seed)

    path = write_trace(trace, args.out)
    print(f'[DONE] wrote {path}: {trace.n_samples} samples @ {_mhz(trace.sample_rate_hz)} ({trace.payload_bytes:,} bytes)')
    write_json({
        'verb': 'synth',
        'path': path,
        'profile': profile.name,
        'class': trace.label,
        'schedule': args.schedule,
        'seed': args.seed,
        'sample_rate_hz': trace.sample_rate_hz,
        'n_samples': trace.n_samples,
        'payload_bytes': trace.payload_bytes,
    }, results_dir(args, cfg, 'synth'), 'synth')
    return 0


# ------------------------------------------------------------
# corpus / resample / verify
# ------------------------------------------------------------

def _manifest_summary(manifest) -> pd.DataFrame:
    rows = []
    for label, entries in sorted(manifest.by_label().items()):
        rows.append({
            'label': label,
            'traces': len(entries),
            'sample_rate_hz': entries[0].sample_rate_hz,
            'bytes': sum(e.n_bytes for e in entries),
        })
    return pd.DataFrame(rows, columns=['label', 'traces', 'sample_rate_hz', 'bytes'])


def cmd_corpus(args, cfg) -> int:
    profile = resolve_profile(args.profile)
    classes = [c.strip() for c in args.classes.split(',')] if args.classes else None
    manifest = build_corpus(
        profile, args.per_class, args.duration, args.rate, args.seed, args.root,
        workers=args.workers, classes=classes,
    )
    summary = _manifest_summary(manifest)
    print(summary.to_string(index=False))
    print(f'[DONE] {len(manifest)} traces, {manifest.total_bytes:,} bytes -> {manifest.root}')

    out = results_dir(args, cfg, 'corpus')
    write_csv(summary, out, 'corpus_summary')
    write_json({
        'verb': 'corpus', 'root': manifest.root, 'profile': profile.name, 'seed': args.seed,
        'per_class': args.per_class, 'duration_s': args.duration, 'sample_rate_hz': args.rate,
        'traces': len(manifest), 'total_bytes': manifest.total_bytes,
    }, out, 'corpus')
    return 0


def cmd_resample(args, cfg) -> int:
    source = load_manifest(args.corpus)
    out = results_dir(args, cfg, 'resample')
    rows = []
    for rate in args.rate:
        dest = Path(args.dest) if len(args.rate) == 1 else Path(args.dest) / f'{rate / 1e6:g}MHz'
        manifest = resample_corpus(source, rate, dest, workers=args.workers, numtaps=cfg.FIR_TAPS)
        fraction = manifest.total_bytes / source.total_bytes if source.total_bytes else 0.0
        rows.append({
            'rate_mhz': rate / 1e6,
            'root': str(manifest.root),
            'traces': len(manifest),
            'bytes': manifest.total_bytes,
            'storage_fraction': fraction,
        })
        print(f'[DONE] {_mhz(rate)}: {manifest.total_bytes:,} bytes ({fraction:.1%} of source) -> {manifest.root}')

    table = pd.DataFrame(rows, columns=['rate_mhz', 'root', 'traces', 'bytes', 'storage_fraction'])
    write_csv(table, out, 'resample')
    write_json({'verb': 'resample', 'source': source.root, 'source_bytes': source.total_bytes, 'rates': rows},
               out, 'resample')
    return 0


def cmd_verify(args, cfg) -> int:
    manifest = load_manifest(args.corpus)
    problems = verify_corpus(manifest)
    out = results_dir(args, cfg, 'verify')
    write_json({'verb': 'verify', 'root': manifest.root, 'entries': len(manifest), 'problems': problems},
               out, 'verify')
    if problems:
        for p in problems:
            print(f'[MISMATCH] {p}')
        raise AcceptanceError(f"manifest와 디스크가 일치하지 않습니다: {len(problems)}건 ({manifest.root})")
    print(f'[OK] {len(manifest)} entries verified ({manifest.total_bytes:,} bytes)')
    return 0


# ------------------------------------------------------------
# features
# ------------------------------------------------------------

def cmd_features(args, cfg) -> int:
    feature_config = feature_config_from_args(args)
    if args.corpus:
        manifest = load_manifest(args.corpus)
        if args.split:
            parts = dict(zip(('train', 'test'), split(manifest, args.split, args.seed)))
        else:
            parts = {'': manifest}
        outputs = {}
        class_table = manifest.labels
        for suffix, part in parts.items():
            dataset = batch_features(iter_traces(part), feature_config, workers=args.workers, class_table=class_table)
            target = Path(str(args.out) + (f'-{suffix}' if suffix else ''))
            save_dataset(dataset, target)
            outputs[suffix or 'all'] = dataset
            print(f'[DONE] {target}: {dataset.n_rows} rows x {dataset.feature_dim} features, classes={list(dataset.class_table)}')
    else:
        traces = (read_trace(p, sample_rate_hz=args.rate, label=args.label) for p in args.traces)
        dataset = batch_features(traces, feature_config, workers=args.workers)
        save_dataset(dataset, args.out)
        outputs = {'all': dataset}
        print(f'[DONE] {args.out}: {dataset.n_rows} rows x {dataset.feature_dim} features')

    rows = [
        {'part': part, 'class': name, 'rows': count}
        for part, ds in outputs.items()
        for name, count in ds.class_counts().items()
    ]
    out = results_dir(args, cfg, 'features')
    write_csv(pd.DataFrame(rows, columns=['part', 'class', 'rows']), out, 'features')
    write_json({'verb': 'features', 'config': feature_config.describe(), 'seed': args.seed,
                'parts': {k: v.n_rows for k, v in outputs.items()}}, out, 'features')
    return 0


# ------------------------------------------------------------
# psd / budget
# ------------------------------------------------------------

def cmd_psd(args, cfg) -> int:
    trace = read_trace(args.trace, sample_rate_hz=args.rate)
    freqs, psd_db = power_spectral_density(trace, nperseg=args.nperseg)
    table = pd.DataFrame({'freq_offset_hz': freqs, 'psd_db_per_hz': psd_db})
    peak = table.iloc[int(table['psd_db_per_hz'].idxmax())]
    print(f'[DONE] {trace.n_samples} samples @ {_mhz(trace.sample_rate_hz)}, '
          f'peak {peak.psd_db_per_hz:.1f} dB/Hz at {peak.freq_offset_hz:+.0f} Hz')
    out = results_dir(args, cfg, 'psd')
    write_csv(table, out, 'psd')
    write_json({'verb': 'psd', 'trace': args.trace, 'nperseg': args.nperseg,
                'peak_freq_offset_hz': float(peak.freq_offset_hz), 'peak_db': float(peak.psd_db_per_hz)},
               out, 'psd')
    return 0


def cmd_budget(args, cfg) -> int:
    budget = storage_budget(args.rate, args.duration)
    print(f'{_mhz(budget.sample_rate_hz)} x {budget.duration_s:g} s = {budget.n_samples:,} samples')
    print(describe_budget(budget))
    write_json({
        'verb': 'budget', 'sample_rate_hz': budget.sample_rate_hz, 'duration_s': budget.duration_s,
        'n_samples': budget.n_samples, 'total_bytes': budget.total_bytes,
        'gb': round(budget.gb, 6), 'gib': round(budget.gib, 6),
    }, results_dir(args, cfg, 'budget'), 'budget')
    return 0


# ------------------------------------------------------------
# 등록
# ------------------------------------------------------------

def register(subparsers, cfg) -> None:
    p = subparsers.add_parser('synth', help='합성 트레이스 1개 생성 (cf32 + sidecar)')
    p.add_argument('--profile', default='low_end', help='내장 프로파일 이름 또는 프로파일 파일 경로')
    p.add_argument('--class', dest='class_id', default=None, help='클래스 id (예: prog3, aes256)')
    p.add_argument('--schedule', default=None, help="클래스 전환 일정 '0:prog3,2.5:prog5'")
    p.add_argument('--duration', type=float, default=0.01, help='길이 (s), 세션 모드에서는 burst 길이')
    p.add_argument('--rate', type=parse_rate, default=20e6, help='샘플레이트 (예: 20M)')
    p.add_argument('--bursts', type=int, default=0, help='암호 세션 burst 수 (0이면 연속 트레이스)')
    p.add_argument('--gap-ms', type=float, default=5.0, help='burst 사이 간격 (ms)')
    p.add_argument('--out', required=True, type=Path, help='출력 .cf32 경로')
    add_seed(p, cfg)
    add_results(p, cfg, 'synth')
    p.set_defaults(handler=cmd_synth)

    p = subparsers.add_parser('corpus', help='라벨별 합성 코퍼스 생성')
    p.add_argument('--profile', default='low_end')
    p.add_argument('--per-class', type=int, default=600)
    p.add_argument('--duration', type=float, default=0.025, help='트레이스 길이 (s)')
    p.add_argument('--rate', type=parse_rate, default=20e6)
    p.add_argument('--classes', default=None, help='쉼표 구분 클래스 목록 (기본: 전체)')
    p.add_argument('--root', required=True, type=Path)
    add_seed(p, cfg)
    add_workers(p, cfg)
    add_results(p, cfg, 'corpus')
    p.set_defaults(handler=cmd_corpus)

    p = subparsers.add_parser('resample', help='코퍼스 다운샘플링')
    p.add_argument('--corpus', required=True, type=Path, help='원본 코퍼스 루트')
    p.add_argument('--rate', required=True, type=parse_rate, action='append', help='목표 샘플레이트 (반복 가능)')
    p.add_argument('--dest', required=True, type=Path)
    add_seed(p, cfg)
    add_workers(p, cfg)
    add_results(p, cfg, 'resample')
    p.set_defaults(handler=cmd_resample)

    p = subparsers.add_parser('verify', help='manifest ↔ 디스크 일치 검사 (불일치 시 code 3)')
    p.add_argument('--corpus', required=True, type=Path)
    add_seed(p, cfg)
    add_results(p, cfg, 'verify')
    p.set_defaults(handler=cmd_verify)

    p = subparsers.add_parser('features', help='트레이스 → 특징 데이터셋 (.hdr/.bin)')
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument('--corpus', type=Path, help='코퍼스 루트')
    src.add_argument('--traces', type=Path, nargs='+', help='개별 .cf32 파일')
    p.add_argument('--rate', type=parse_rate, default=None, help='sidecar 없는 트레이스의 샘플레이트')
    p.add_argument('--label', default=None, help='sidecar 없는 트레이스의 라벨')
    p.add_argument('--split', type=float, default=None, help='train 비율 (예: 0.8333), 지정 시 -train/-test 저장')
    p.add_argument('--out', required=True, type=Path, help='데이터셋 경로 (확장자 없이)')
    add_feature_args(p)
    add_seed(p, cfg)
    add_workers(p, cfg)
    add_results(p, cfg, 'features')
    p.set_defaults(handler=cmd_features)

    p = subparsers.add_parser('psd', help='트레이스 PSD (Welch) 계산')
    p.add_argument('--trace', required=True, type=Path)
    p.add_argument('--rate', type=parse_rate, default=None)
    p.add_argument('--nperseg', type=int, default=4096)
    add_seed(p, cfg)
    add_results(p, cfg, 'psd')
    p.set_defaults(handler=cmd_psd)

    p = subparsers.add_parser('budget', help='I/Q 저장 용량 계산')
    p.add_argument('--rate', type=parse_rate, default=REFERENCE_RATE_HZ)
    p.add_argument('--duration', type=float, default=REFERENCE_DURATION_S, help='수집 시간 (s)')
    add_seed(p, cfg)
    add_results(p, cfg, 'budget')
    p.set_defaults(handler=cmd_budget)
