"""
실시간 verb: serve / watch / bench
"""
from __future__ import annotations

import logging
import threading
from pathlib import Path

import pandas as pd

from emtriage.errors import AcceptanceError, InvalidArgumentError, StreamError
from emtriage.models import ClassSchedule, EmitterProfile, FeatureConfig, MlpConfig, MlpModel, StreamStats
from emtriage.commands import (
    add_feature_args, add_results, add_seed, feature_config_from_args, parse_rate, parse_rate_list, results_dir,
)
from emtriage.utils import mlp
from emtriage.utils.corpus import trace_seed
from emtriage.utils.emitter import synth_trace
from emtriage.utils.features import batch_features
from emtriage.utils.profiles import resolve_profile
from emtriage.utils.results import write_csv, write_json
from emtriage.utils.stream import benchmark_latency, consume_stream, parse_endpoint, serve_stream
from emtriage.utils.trace_io import read_trace

logger = logging.getLogger(__name__)

DEFAULT_ENDPOINT = '127.0.0.1:5555'
DEFAULT_BENCH_RATES = '20M,16M,12M,8M,4M'


def _stream_source(args):
    if args.trace:
        trace = read_trace(args.trace, sample_rate_hz=args.rate)
        return trace, trace.sample_rate_hz
    profile = resolve_profile(args.profile)
    if args.schedule:
        schedule = ClassSchedule.parse(args.schedule)
    elif args.class_id:
        schedule = ClassSchedule(((0.0, args.class_id),))
    else:
        raise InvalidArgumentError(f"--trace, --class, --schedule 중 하나가 필요합니다 (클래스: {', '.join(profile.class_ids)})")
    for _, class_id in schedule.entries:
        profile.get_class(class_id)
    return (profile, schedule), args.rate


def quick_model(profile: EmitterProfile, feature_config: FeatureConfig, rate_hz: float, seed: int,
                per_class: int = 20) -> MlpModel:
    """벤치마크/데모용 소형 모델 (클래스당 per_class 트레이스, 나이퀴스트 대역 안의 클래스만)"""
    classes = [c.class_id for c in profile.classes if c.max_offset_hz < rate_hz / 2]
    if len(classes) < 2:
        raise InvalidArgumentError(f"{rate_hz / 1e6:g} MHz 대역에 들어오는 클래스가 2개 미만입니다 ({profile.name})")
    traces = (
        synth_trace(profile, c, feature_config.segment_s, rate_hz, trace_seed(seed, c, i))
        for c in classes
        for i in range(per_class)
    )
    dataset = batch_features(traces, feature_config)
    return mlp.train(dataset, MlpConfig(hidden_layers=(10,), epochs=60, seed=seed))


# ------------------------------------------------------------
# serve
# ------------------------------------------------------------

def cmd_serve(args, cfg) -> int:
    source, rate = _stream_source(args)
    total_s = args.duration if args.duration and args.duration > 0 else None
    sent = serve_stream(
        source, rate, parse_endpoint(args.listen),
        chunk_s=args.chunk_ms / 1000.0, total_s=total_s, seed=args.seed,
        accept_timeout_s=args.accept_timeout,
    )
    print(f'[DONE] sent {sent:,} bytes ({sent // 8:,} samples @ {rate / 1e6:g} MHz)')
    write_json({'verb': 'serve', 'listen': args.listen, 'sample_rate_hz': rate, 'seed': args.seed,
                'bytes_sent': sent}, results_dir(args, cfg, 'serve'), 'serve')
    return 0


# ------------------------------------------------------------
# watch
# ------------------------------------------------------------

def cmd_watch(args, cfg) -> int:
    model = mlp.load_model(args.model)
    feature_config = feature_config_from_args(args)
    endpoint = parse_endpoint(args.connect)

    # --local-schedule: 같은 프로세스에서 라이브 합성 서버를 띄운다 (데모용)
    server = None
    if args.local_schedule:
        profile = resolve_profile(args.profile)
        schedule = ClassSchedule.parse(args.local_schedule)
        ready = threading.Event()
        bound = []

        def _on_ready(ep):
            bound.append(ep)
            ready.set()

        server = threading.Thread(
            target=serve_stream,
            args=((profile, schedule), args.rate, endpoint),
            kwargs={'total_s': args.local_duration, 'seed': args.seed, 'on_ready': _on_ready},
            name='emtriage-watch-local',
            daemon=True,
        )
        server.start()
        if not ready.wait(timeout=10.0):
            raise StreamError(f"로컬 스트림 서버를 시작할 수 없습니다: {args.connect}")
        endpoint = bound[0]

    stats = StreamStats()
    rows = []
    hop_s = args.hop_ms / 1000.0 if args.hop_ms else None
    results = consume_stream(
        endpoint, args.window_ms / 1000.0, model, feature_config,
        sample_rate_hz=args.rate, deadline_ms=args.deadline_ms, queue_depth=cfg.QUEUE_DEPTH,
        hop_s=hop_s, stats=stats,
    )
    print('seq\tlabel\tscore\tdelay_ms')
    try:
        for r in results:
            print(f'{r.seq}\t{r.class_name}\t{r.score:.4f}\t{r.processing_delay_ms:.2f}', flush=True)
            rows.append({
                'seq': r.seq, 'label': r.class_name, 'score': r.score,
                'delay_ms': r.processing_delay_ms, 'overrun': r.overrun,
            })
            if args.max_windows and len(rows) >= args.max_windows:
                break
    finally:
        results.close()
    if server is not None:
        server.join(timeout=5.0)

    out = results_dir(args, cfg, 'watch')
    write_csv(pd.DataFrame(rows, columns=['seq', 'label', 'score', 'delay_ms', 'overrun']), out, 'watch')
    payload = {
        'verb': 'watch', 'connect': args.connect, 'seed': args.seed, 'windows': stats.windows,
        'overruns': stats.overruns, 'backpressure_events': stats.backpressure_events,
        'truncated_tail_bytes': stats.truncated_tail_bytes,
    }
    print(f'windows={stats.windows} overruns={stats.overruns} backpressure={stats.backpressure_events}')

    if args.expect:
        matched = sum(1 for row in rows if row['label'] == args.expect)
        fraction = matched / len(rows) if rows else 0.0
        payload.update({'expect': args.expect, 'match_fraction': fraction})
        write_json(payload, out, 'watch')
        print(f'{args.expect}: {matched}/{len(rows)} windows ({fraction:.1%})')
        if fraction < args.min_match:
            raise AcceptanceError(f"{args.expect} 일치 비율 {fraction:.3f} < {args.min_match:.3f}")
        return 0

    write_json(payload, out, 'watch')
    return 0


# ------------------------------------------------------------
# bench
# ------------------------------------------------------------

def cmd_bench(args, cfg) -> int:
    feature_config = feature_config_from_args(args)
    profile = resolve_profile(args.profile)
    rates = args.rates
    if args.model:
        model = mlp.load_model(args.model)
    else:
        logger.info('벤치마크용 소형 모델 학습 (--model 미지정)')
        model = quick_model(profile, feature_config, max(rates), args.seed)

    reports = benchmark_latency(
        rates, args.window_ms / 1000.0, model, feature_config,
        n_windows=args.windows, profile=profile, class_id=args.class_id, seed=args.seed,
        deadline_ms=args.deadline_ms, queue_depth=cfg.QUEUE_DEPTH,
    )
    table = pd.DataFrame([
        {
            'rate_mhz': r.sample_rate_hz / 1e6,
            'window_samples': r.window_len_samples,
            'windows': r.n_windows,
            'min_ms': r.min_ms,
            'mean_ms': r.mean_ms,
            'p95_ms': r.p95_ms,
            'max_ms': r.max_ms,
            'deadline_ms': r.deadline_ms,
            'overruns': r.overruns,
            'backpressure': r.backpressure_events,
        }
        for r in reports
    ])
    print(table.to_string(index=False, float_format=lambda v: f'{v:.2f}'))

    out = results_dir(args, cfg, 'bench')
    write_csv(table, out, 'bench')
    write_json({'verb': 'bench', 'seed': args.seed, 'window_ms': args.window_ms, 'rates': table.to_dict('records')},
               out, 'bench')

    overruns = int(table['overruns'].sum())
    if overruns:
        raise AcceptanceError(f"deadline({args.deadline_ms:g} ms) 초과 윈도우 {overruns}개")
    if args.p95_ms is not None and float(table['p95_ms'].max()) > args.p95_ms:
        raise AcceptanceError(f"p95 지연 {table['p95_ms'].max():.2f} ms > {args.p95_ms:g} ms")
    print('[PASS] no deadline overruns')
    return 0


# ------------------------------------------------------------
# 등록
# ------------------------------------------------------------

def register(subparsers, cfg) -> None:
    p = subparsers.add_parser('serve', help='raw cf32 I/Q를 TCP로 실시간 송신')
    p.add_argument('--listen', default=DEFAULT_ENDPOINT, help=f'host:port (기본: {DEFAULT_ENDPOINT})')
    p.add_argument('--rate', type=parse_rate, default=4e6, help='샘플레이트 (트레이스 sidecar가 있으면 무시)')
    p.add_argument('--trace', type=Path, default=None, help='송신할 .cf32 트레이스')
    p.add_argument('--profile', default='low_end')
    p.add_argument('--class', dest='class_id', default=None)
    p.add_argument('--schedule', default=None, help="클래스 전환 일정 '0:prog3,2.5:prog5'")
    p.add_argument('--duration', type=float, default=0.0, help='라이브 송신 시간 (s, 0이면 클라이언트 종료까지)')
    p.add_argument('--chunk-ms', type=float, default=10.0)
    p.add_argument('--accept-timeout', type=float, default=60.0, help='클라이언트 대기 시간 (s)')
    add_seed(p, cfg)
    add_results(p, cfg, 'serve')
    p.set_defaults(handler=cmd_serve)

    p = subparsers.add_parser('watch', help='스트림 수신 → 윈도우별 분류')
    p.add_argument('--connect', default=DEFAULT_ENDPOINT, help=f'host:port (기본: {DEFAULT_ENDPOINT})')
    p.add_argument('--rate', type=parse_rate, default=4e6)
    p.add_argument('--model', required=True, type=Path)
    p.add_argument('--window-ms', type=float, default=10.0)
    p.add_argument('--hop-ms', type=float, default=None, help='윈도우 간격 (ms, 기본: window와 같음)')
    p.add_argument('--deadline-ms', type=float, default=cfg.DEADLINE_MS)
    p.add_argument('--max-windows', type=int, default=0, help='이 개수만큼 처리 후 종료 (0: 스트림 끝까지)')
    p.add_argument('--expect', default=None, help='기대 클래스 (일치 비율 검사)')
    p.add_argument('--min-match', type=float, default=0.9)
    p.add_argument('--local-schedule', default=None, help='같은 프로세스에서 라이브 서버 실행 (데모용)')
    p.add_argument('--local-duration', type=float, default=2.0)
    p.add_argument('--profile', default='low_end')
    add_feature_args(p, default_preset='programs')
    add_seed(p, cfg)
    add_results(p, cfg, 'watch')
    p.set_defaults(handler=cmd_watch)

    p = subparsers.add_parser('bench', help='loopback 지연 벤치마크 (deadline 초과 시 code 3)')
    p.add_argument('--rates', type=parse_rate_list, default=parse_rate_list(DEFAULT_BENCH_RATES))
    p.add_argument('--window-ms', type=float, default=10.0)
    p.add_argument('--windows', type=int, default=100)
    p.add_argument('--deadline-ms', type=float, default=cfg.DEADLINE_MS)
    p.add_argument('--p95-ms', type=float, default=None, help='p95 지연 상한 (선택)')
    p.add_argument('--model', type=Path, default=None, help='모델 파일 (없으면 소형 모델 즉석 학습)')
    p.add_argument('--profile', default='low_end')
    p.add_argument('--class', dest='class_id', default=None)
    add_feature_args(p, default_preset='programs')
    add_seed(p, cfg)
    add_results(p, cfg, 'bench')
    p.set_defaults(handler=cmd_bench)
