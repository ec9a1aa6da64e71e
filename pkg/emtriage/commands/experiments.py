"""
실험 verb: exp-crypto / exp-programs / exp-downsample / exp-tamper

각 실험은 합성 코퍼스를 만들고(기본: 메모리, --materialize: 디스크) 결과 CSV + <verb>.json을 남긴다.
기준 미달이면 AcceptanceError(code 3).
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
import pandas as pd

from emtriage.errors import AcceptanceError, InvalidArgumentError
from emtriage.models import (
    BYTES_PER_SAMPLE, CorpusManifest, CrossValReport, Dataset, EmitterProfile, FeatureConfig, IQTrace,
    ManifestEntry, NoveltyConfig,
)
from emtriage.commands import (
    add_feature_args, add_mlp_args, add_results, add_seed, add_workers, feature_config_from_args,
    mlp_config_from_args, parse_gamma, parse_rate, require_positive, results_dir,
)
from emtriage.utils import novelty
from emtriage.utils.corpus import (
    build_corpus, iter_traces, relative_trace_path, resample_corpus, split, trace_seed,
)
from emtriage.utils.emitter import synth_trace, tampered_variants
from emtriage.utils.features import batch_features, chunked, make_features
from emtriage.utils.metrics import confusion_table, cross_validate, format_crossval, metrics_table
from emtriage.utils.profiles import resolve_profile
from emtriage.utils.resample import RATE_LADDER_HZ, downsample
from emtriage.utils.results import write_csv, write_json, write_xlsx

logger = logging.getLogger(__name__)

CRYPTO_THRESHOLD = 0.95
PROGRAMS_THRESHOLD = 0.90
DOWNSAMPLE_TOLERANCE = 0.02
DOWNSAMPLE_MIN_DROP = 0.10
STORAGE_TOLERANCE = 0.001
TAMPER_MAX_LEGIT_ERR = 0.25
# 기본 gamma = TAMPER_GAMMA_FACTOR / feature_dim (표준화 특징에서 'scale' 규칙의 0.1배)
TAMPER_GAMMA_FACTOR = 0.1

# 실측 장비 기준 F1 (합성 코퍼스 결과와 나란히 기록)
DEVICE_REFERENCE_F1 = {'other': 0.89, 'aes256': 0.82, 'aes128': 0.95, '3des': 0.83}


# ------------------------------------------------------------
# 코퍼스 소스
# ------------------------------------------------------------

def _virtual_manifest(profile: EmitterProfile, classes: Sequence[str], per_class: int, duration_s: float,
                      rate_hz: float, seed: int) -> CorpusManifest:
    """build_corpus와 같은 엔트리 목록 (파일 없이 seed만 기록)"""
    n_bytes = BYTES_PER_SAMPLE * int(round(duration_s * rate_hz))
    entries = [
        ManifestEntry(
            path=relative_trace_path(c, i), label=c, sample_rate_hz=rate_hz,
            center_freq_hz=profile.emission_freq_hz, duration_s=duration_s,
            seed=trace_seed(seed, c, i), n_bytes=n_bytes,
        )
        for c in classes
        for i in range(per_class)
    ]
    return CorpusManifest(root=Path('.'), entries=tuple(entries))


def _synth_entries(profile: EmitterProfile, manifest: CorpusManifest) -> Iterator[IQTrace]:
    for e in manifest.entries:
        trace = synth_trace(profile, e.label, e.duration_s, e.sample_rate_hz, e.seed)
        yield replace(trace, extra={**trace.extra, 'path': e.path})


class CorpusSource:
    """메모리 합성 또는 디스크 코퍼스. 어느 쪽이든 같은 seed → 같은 트레이스."""

    def __init__(self, profile: EmitterProfile, classes: Sequence[str], args, rate_hz: float, out: Path):
        self.profile = profile
        self.classes = list(classes)
        for c in self.classes:
            profile.get_class(c)
        self.materialize = args.materialize
        if self.materialize:
            self.manifest = build_corpus(
                profile, args.per_class, args.duration, rate_hz, args.seed, out / 'corpus',
                workers=args.workers, classes=self.classes,
            )
        else:
            self.manifest = _virtual_manifest(profile, self.classes, args.per_class, args.duration, rate_hz, args.seed)

    def traces(self, manifest: Optional[CorpusManifest] = None) -> Iterator[IQTrace]:
        manifest = manifest or self.manifest
        if self.materialize:
            return iter_traces(manifest)
        return _synth_entries(self.profile, manifest)


def _check_segment(args, feature_config: FeatureConfig) -> None:
    require_positive(args.duration, '--duration')
    if args.per_class < 1:
        raise InvalidArgumentError(f"--per-class는 1 이상이어야 합니다: {args.per_class}")
    if args.duration + 1e-12 < feature_config.segment_s:
        raise InvalidArgumentError(
            f"--duration({args.duration:g}s)이 특징 구간({feature_config.segment_s:g}s)보다 짧습니다"
        )


def _folds_table(report: CrossValReport) -> pd.DataFrame:
    return pd.DataFrame({
        'fold': np.arange(1, report.k + 1),
        'accuracy': report.fold_accuracies,
        'macro_f1': report.fold_f1,
    })


def _crossval_summary(report: CrossValReport) -> dict:
    return {
        'k': report.k,
        'mean_accuracy': report.mean_accuracy,
        'ci95_halfwidth': report.ci95_halfwidth,
        'mean_f1': report.mean_f1,
        'ci95_f1_halfwidth': report.ci95_f1_halfwidth,
        'fold_accuracies': report.fold_accuracies,
    }


# ------------------------------------------------------------
# exp-crypto / exp-programs
# ------------------------------------------------------------

def _classification_experiment(args, cfg, verb: str, default_threshold: float):
    """공통 흐름: 코퍼스 → 특징 → k-fold 교차 검증"""
    started = time.perf_counter()
    profile = resolve_profile(args.profile)
    feature_config = feature_config_from_args(args)
    _check_segment(args, feature_config)
    out = results_dir(args, cfg, verb)
    classes = [c.strip() for c in args.classes.split(',')] if args.classes else profile.class_ids

    source = CorpusSource(profile, classes, args, args.rate, out)
    dataset = batch_features(source.traces(), feature_config, workers=args.workers, class_table=sorted(classes))
    config = mlp_config_from_args(args)
    report = cross_validate(dataset, config, k=args.k, workers=args.workers)
    threshold = default_threshold if args.threshold is None else args.threshold

    payload = {
        'verb': verb,
        'seed': args.seed,
        'profile': profile.name,
        'classes': classes,
        'per_class': args.per_class,
        'sample_rate_hz': args.rate,
        'duration_s': args.duration,
        'materialized': bool(args.materialize),
        'features': feature_config.describe(),
        'topology': [dataset.feature_dim, *config.hidden_layers, dataset.n_classes],
        'learning_rate': config.learning_rate,
        'epochs': config.epochs,
        'threshold': threshold,
        'corpus_bytes': source.manifest.total_bytes,
        **_crossval_summary(report),
    }
    return classes, report, threshold, payload, out, started


def _finish(verb: str, report: CrossValReport, threshold: float, payload: dict, out: Path, started: float) -> int:
    passed = report.mean_accuracy >= threshold
    payload.update({'passed': passed, 'elapsed_s': round(time.perf_counter() - started, 3)})
    write_json(payload, out, verb)
    if not passed:
        raise AcceptanceError(f"{verb}: 평균 정확도 {report.mean_accuracy:.4f} < 기준 {threshold:.4f}")
    print(f'[PASS] mean accuracy {report.mean_accuracy:.4f} >= {threshold:.2f}')
    return 0


def cmd_exp_crypto(args, cfg) -> int:
    verb = 'exp-crypto'
    classes, report, threshold, payload, out, started = _classification_experiment(
        args, cfg, verb, CRYPTO_THRESHOLD,
    )
    # 행 순서는 프로파일 클래스 순서 (Other, AES-256, AES-128, 3DES)
    table = metrics_table(report.pooled, class_order=classes)
    reference = [DEVICE_REFERENCE_F1.get(c) for c in classes]
    if any(v is not None for v in reference):
        table['Device F1'] = reference

    print(table.to_string(index=False, float_format=lambda v: f'{v:.2f}', na_rep='-'))
    print()
    print(format_crossval(report))

    write_csv(table, out, 'crypto_report')
    write_csv(_folds_table(report), out, 'crypto_folds')
    write_csv(confusion_table(report.pooled), out, 'crypto_confusion', index=True)
    if args.xlsx:
        write_xlsx({'report': table, 'folds': _folds_table(report), 'confusion': confusion_table(report.pooled)},
                   out, 'crypto')
    payload['pooled_f1'] = dict(zip(classes, table['F1-Score']))
    return _finish(verb, report, threshold, payload, out, started)


def cmd_exp_programs(args, cfg) -> int:
    verb = 'exp-programs'
    classes, report, threshold, payload, out, started = _classification_experiment(
        args, cfg, verb, PROGRAMS_THRESHOLD,
    )
    confusion = confusion_table(report.pooled)
    table = metrics_table(report.pooled)

    print('Confusion matrix (rows = true, cols = predicted)')
    print(confusion.to_string())
    print()
    print(table.to_string(index=False, float_format=lambda v: f'{v:.2f}'))
    print()
    print(format_crossval(report))

    write_csv(confusion, out, 'programs_confusion', index=True)
    write_csv(table, out, 'programs_report')
    write_csv(_folds_table(report), out, 'programs_folds')
    if args.xlsx:
        write_xlsx({'confusion': confusion, 'report': table, 'folds': _folds_table(report)}, out, 'programs')
    payload['confusion_matrix'] = report.pooled.confusion_matrix
    return _finish(verb, report, threshold, payload, out, started)


# ------------------------------------------------------------
# exp-downsample
# ------------------------------------------------------------

def _multi_rate_rows(
    traces: Iterable[IQTrace],
    rates: Sequence[float],
    feature_config: FeatureConfig,
    numtaps: int,
    workers: int,
) -> Iterator[tuple[list[np.ndarray], list[int], str]]:
    """트레이스 1개를 모든 rate로 다운샘플링 → (rate별 특징, rate별 payload bytes, label)"""

    def _one(trace: IQTrace):
        values, sizes = [], []
        for rate in rates:
            t = trace if rate == trace.sample_rate_hz else downsample(trace, rate, numtaps=numtaps)
            values.append(make_features(t, feature_config).values)
            sizes.append(t.payload_bytes)
        return values, sizes, trace.label

    if workers <= 1:
        for trace in traces:
            yield _one(trace)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for block in chunked(traces, workers * 4):
            yield from pool.map(_one, block)


def _rate_datasets(args, cfg, source: CorpusSource, rates: Sequence[float], feature_config: FeatureConfig,
                   out: Path) -> tuple[list[Dataset], list[int]]:
    table = tuple(sorted(source.classes))
    lookup = {name: i for i, name in enumerate(table)}

    if source.materialize:
        datasets, sizes = [], []
        for rate in rates:
            if rate == args.rate:
                manifest = source.manifest
            else:
                manifest = resample_corpus(
                    source.manifest, rate, out / 'corpus' / f'{rate / 1e6:g}MHz',
                    workers=args.workers, numtaps=cfg.FIR_TAPS,
                )
            datasets.append(batch_features(iter_traces(manifest), feature_config, workers=args.workers,
                                           class_table=table))
            sizes.append(manifest.total_bytes)
        return datasets, sizes

    rows: list[list[np.ndarray]] = [[] for _ in rates]
    sizes = [0] * len(rates)
    labels: list[int] = []
    for values, nbytes, label in _multi_rate_rows(source.traces(), rates, feature_config, cfg.FIR_TAPS,
                                                  args.workers):
        for i, v in enumerate(values):
            rows[i].append(v)
            sizes[i] += nbytes[i]
        labels.append(lookup[label])
        if len(labels) % 500 == 0:
            logger.info(f'다운샘플링 특징 추출 진행: {len(labels)} traces × {len(rates)} rates')
    return [Dataset(np.vstack(r), np.array(labels), table) for r in rows], sizes


def cmd_exp_downsample(args, cfg) -> int:
    verb = 'exp-downsample'
    started = time.perf_counter()
    profile = resolve_profile(args.profile)
    feature_config = feature_config_from_args(args)
    _check_segment(args, feature_config)
    out = results_dir(args, cfg, verb)
    classes = [c.strip() for c in args.classes.split(',')]
    rates = [args.rate] + [r for r in RATE_LADDER_HZ if r < args.rate]

    source = CorpusSource(profile, classes, args, args.rate, out)
    datasets, sizes = _rate_datasets(args, cfg, source, rates, feature_config, out)
    config = mlp_config_from_args(args)

    records = []
    for rate, dataset, nbytes in zip(rates, datasets, sizes):
        report = cross_validate(dataset, config, k=args.k, workers=args.workers)
        records.append({
            'rate_mhz': rate / 1e6,
            'accuracy': report.mean_accuracy,
            'accuracy_ci95': report.ci95_halfwidth,
            'macro_f1': report.mean_f1,
            'f1_ci95': report.ci95_f1_halfwidth,
            'payload_bytes': nbytes,
            'storage_fraction': nbytes / sizes[0],
        })
        logger.info(f'{rate / 1e6:g} MHz: accuracy={report.mean_accuracy:.4f} ± {report.ci95_halfwidth:.4f}')
    table = pd.DataFrame(records)
    print(table.to_string(index=False, float_format=lambda v: f'{v:.4f}'))

    write_csv(table, out, 'downsample')
    if args.xlsx:
        write_xlsx({'downsample': table}, out, 'downsample')

    by_rate = dict(zip(rates, records))
    tolerance = DOWNSAMPLE_TOLERANCE if args.threshold is None else args.threshold
    failures = []
    source_acc = records[0]['accuracy']
    if 4e6 in by_rate:
        acc4 = by_rate[4e6]['accuracy']
        if acc4 < source_acc - tolerance:
            failures.append(f"4 MHz 정확도 {acc4:.4f} < {args.rate / 1e6:g} MHz 정확도 {source_acc:.4f} - {tolerance}")
        expected = 4e6 / args.rate
        fraction = by_rate[4e6]['storage_fraction']
        if abs(fraction - expected) > STORAGE_TOLERANCE:
            failures.append(f"4 MHz 저장 비율 {fraction:.4%} != {expected:.1%} ± {STORAGE_TOLERANCE:.1%}")
        if 0.5e6 in by_rate:
            acc05 = by_rate[0.5e6]['accuracy']
            if acc05 > acc4 - args.min_drop:
                failures.append(f"0.5 MHz 정확도 {acc05:.4f}가 4 MHz({acc4:.4f})보다 {args.min_drop} 이상 낮지 않습니다")
    else:
        logger.warning(f'4 MHz가 rate 목록에 없어 곡선 검사를 건너뜀: {[r / 1e6 for r in rates]}')

    write_json({
        'verb': verb, 'seed': args.seed, 'profile': profile.name, 'classes': classes,
        'per_class': args.per_class, 'source_rate_hz': args.rate, 'materialized': bool(args.materialize),
        'features': feature_config.describe(), 'k': args.k, 'tolerance': tolerance, 'min_drop': args.min_drop,
        'rates': records, 'failures': failures, 'passed': not failures,
        'elapsed_s': round(time.perf_counter() - started, 3),
    }, out, verb)
    if failures:
        raise AcceptanceError(f"{verb}: " + '; '.join(failures))
    print('[PASS] accuracy holds down to 4 MHz; storage at 4 MHz = '
          f"{by_rate.get(4e6, records[0])['storage_fraction']:.1%}")
    return 0


# ------------------------------------------------------------
# exp-tamper
# ------------------------------------------------------------

def _tamper_gamma(gamma, feature_dim: int):
    if gamma is None:
        return TAMPER_GAMMA_FACTOR / feature_dim
    return gamma


def cmd_exp_tamper(args, cfg) -> int:
    verb = 'exp-tamper'
    started = time.perf_counter()
    profile = resolve_profile(args.profile)
    feature_config = feature_config_from_args(args)
    _check_segment(args, feature_config)
    if not 0 < args.train < args.per_class:
        raise InvalidArgumentError(f"--train은 1 이상 --per-class({args.per_class}) 미만이어야 합니다: {args.train}")
    if args.variants < 1 or args.variant_traces < 1:
        raise InvalidArgumentError(f"--variants/--variant-traces는 1 이상이어야 합니다: {args.variants}/{args.variant_traces}")
    out = results_dir(args, cfg, verb)

    source = CorpusSource(profile, [args.legit], args, args.rate, out)
    train_part, test_part = split(source.manifest, args.train / args.per_class, args.seed)
    train_set = batch_features(source.traces(train_part), feature_config, workers=args.workers)
    model = novelty.fit(train_set.X, NoveltyConfig(
        nu=args.nu, gamma=_tamper_gamma(args.gamma, train_set.feature_dim), seed=args.seed,
        tol=cfg.SVM_TOL, max_iter=cfg.SVM_MAX_ITER,
    ))

    legit = novelty.detect_tampering(model, source.traces(test_part), feature_config, workers=args.workers)

    variants = tampered_variants(profile, args.legit, args.variants, args.seed)
    modified_profile = profile.with_classes([*profile.classes, *variants])
    modified_traces = []
    for v in variants:
        for j in range(args.variant_traces):
            trace = synth_trace(modified_profile, v.class_id, args.duration, args.rate,
                                trace_seed(args.seed, v.class_id, j))
            modified_traces.append(replace(trace, extra={**trace.extra, 'path': f'{v.class_id}#{j:02d}'}))
    modified = novelty.detect_tampering(model, modified_traces, feature_config, workers=args.workers)

    # 변형별로 트레이스 과반이 이상치면 탐지
    flags = np.array([v.is_outlier for v in modified.verdicts]).reshape(len(variants), args.variant_traces)
    detected_by_variant = flags.sum(axis=1) * 2 >= args.variant_traces
    detected = int(detected_by_variant.sum())
    legit_err = legit.fraction_flagged

    verdicts = pd.concat([
        novelty.verdict_table(legit).assign(kind='legit'),
        novelty.verdict_table(modified).assign(kind='modified'),
    ], ignore_index=True)
    variant_table = pd.DataFrame({
        'variant': [v.class_id for v in variants],
        'flagged_traces': flags.sum(axis=1),
        'traces': args.variant_traces,
        'detected': detected_by_variant,
    })
    line = f'legit_err={legit_err:.3f} tamper_detect={detected}/{len(variants)}'
    print(variant_table.to_string(index=False))
    print(line)

    write_csv(verdicts, out, 'tamper_verdicts')
    write_csv(variant_table, out, 'tamper_variants')
    if args.xlsx:
        write_xlsx({'verdicts': verdicts, 'variants': variant_table}, out, 'tamper')

    max_err = TAMPER_MAX_LEGIT_ERR if args.threshold is None else args.threshold
    min_detect = len(variants) if args.min_detect is None else args.min_detect
    failures = []
    if legit_err > max_err:
        failures.append(f"정상 펌웨어 오탐률 {legit_err:.3f} > {max_err:.3f}")
    if detected < min_detect:
        failures.append(f"변조 탐지 {detected}/{len(variants)} < {min_detect}")
    write_json({
        'verb': verb, 'seed': args.seed, 'profile': profile.name, 'legit_class': args.legit,
        'n_train': model.n_train, 'n_support': model.n_support, 'nu': args.nu, 'gamma': model.gamma,
        'legit_tested': legit.n_total, 'legit_flagged': legit.n_outliers, 'legit_err': legit_err,
        'variants': len(variants), 'detected': detected, 'summary': line,
        'max_legit_err': max_err, 'min_detect': min_detect, 'failures': failures, 'passed': not failures,
        'elapsed_s': round(time.perf_counter() - started, 3),
    }, out, verb)
    if failures:
        raise AcceptanceError(f"{verb}: " + '; '.join(failures))
    return 0


# ------------------------------------------------------------
# 등록
# ------------------------------------------------------------

def _add_common(p, cfg, verb: str, profile: str, preset: str, hidden: str, duration: float = 0.01) -> None:
    p.add_argument('--profile', default=profile, help=f'프로파일 이름 또는 파일 (기본: {profile})')
    p.add_argument('--per-class', type=int, default=600, help='클래스당 트레이스 수 (기본: 600)')
    p.add_argument('--rate', type=parse_rate, default=20e6, help='수집 샘플레이트 (기본: 20M)')
    p.add_argument('--duration', type=float, default=duration, help=f'트레이스 길이 (s, 기본: {duration})')
    p.add_argument('--materialize', action='store_true', help='코퍼스를 <results>/corpus에 디스크로 생성')
    p.add_argument('--xlsx', action='store_true', help='같은 테이블을 엑셀 파일로도 저장')
    add_feature_args(p, default_preset=preset)
    if hidden:
        add_mlp_args(p, cfg, default_hidden=hidden)
    add_seed(p, cfg)
    add_workers(p, cfg)
    add_results(p, cfg, verb)


def register(subparsers, cfg) -> None:
    p = subparsers.add_parser('exp-crypto', help='암호 연산 4클래스 실험 (10-fold, 기준 0.95)')
    _add_common(p, cfg, 'exp-crypto', 'high_end', 'crypto', '10,5')
    p.add_argument('--classes', default=None, help='클래스 목록 (쉼표 구분, 기본: 프로파일 전체)')
    p.add_argument('--k', type=int, default=10)
    p.add_argument('--threshold', type=float, default=None, help=f'평균 정확도 기준 (기본: {CRYPTO_THRESHOLD})')
    p.set_defaults(handler=cmd_exp_crypto)

    p = subparsers.add_parser('exp-programs', help='프로그램 10클래스 실험 (10-fold, 기준 0.90)')
    _add_common(p, cfg, 'exp-programs', 'low_end', 'programs', '10,3')
    p.add_argument('--classes', default=None, help='클래스 목록 (쉼표 구분, 기본: 프로파일 전체)')
    p.add_argument('--k', type=int, default=10)
    p.add_argument('--threshold', type=float, default=None, help=f'평균 정확도 기준 (기본: {PROGRAMS_THRESHOLD})')
    p.set_defaults(handler=cmd_exp_programs)

    p = subparsers.add_parser('exp-downsample', help='샘플레이트별 정확도 곡선 + 저장 용량')
    _add_common(p, cfg, 'exp-downsample', 'low_end', 'crypto', '10,5')
    p.add_argument('--classes', default='prog0,prog1,prog2,prog3')
    p.add_argument('--k', type=int, default=10)
    p.add_argument('--threshold', type=float, default=None,
                   help=f'4 MHz 정확도 허용 하락폭 (기본: {DOWNSAMPLE_TOLERANCE})')
    p.add_argument('--min-drop', type=float, default=DOWNSAMPLE_MIN_DROP,
                   help=f'0.5 MHz에서 요구되는 최소 정확도 하락 (기본: {DOWNSAMPLE_MIN_DROP})')
    p.set_defaults(handler=cmd_exp_downsample)

    p = subparsers.add_parser('exp-tamper', help='펌웨어 변조 탐지 실험 (one-class SVM)')
    _add_common(p, cfg, 'exp-tamper', 'low_end', 'programs', '')
    p.add_argument('--legit', default='prog0', help='정상 펌웨어 클래스 (기본: prog0)')
    p.add_argument('--train', type=int, default=500, help='학습 트레이스 수 (나머지는 테스트)')
    p.add_argument('--variants', type=int, default=20, help='변조 펌웨어 개수')
    p.add_argument('--variant-traces', type=int, default=1, help='변조 펌웨어당 트레이스 수')
    p.add_argument('--nu', type=float, default=cfg.NOVELTY_NU)
    p.add_argument('--gamma', type=parse_gamma, default=None,
                   help=f"RBF gamma, 'scale', 또는 미지정 시 {TAMPER_GAMMA_FACTOR} / feature_dim")
    p.add_argument('--threshold', type=float, default=None,
                   help=f'정상 펌웨어 오탐률 상한 (기본: {TAMPER_MAX_LEGIT_ERR})')
    p.add_argument('--min-detect', type=int, default=None, help='탐지해야 할 변조 펌웨어 수 (기본: 전부)')
    p.set_defaults(handler=cmd_exp_tamper)
