"""
실시간 I/Q 스트림 (TCP, raw cf32, 헤더/프레이밍 없음)

    serve_stream    트레이스 또는 라이브 합성 신호를 8 × rate B/s 속도로 송신
    consume_stream  수신 스레드 → 제한 큐 → 특징 추출 + 분류, 윈도우별 지연 측정
    benchmark_latency  loopback으로 두 단계를 함께 돌려 rate별 지연 통계 산출

처리 deadline(기본 200 ms)은 특징 추출 + 추론 시간에 대한 예산이다.
TCP 재전송 타임아웃 자체를 흉내 내지는 않는다.
"""
from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from typing import Callable, Iterable, Iterator, Optional, Union

import numpy as np

from emtriage.errors import EmTriageError, InvalidArgumentError, ShapeError, StreamError
from emtriage.models import (
    BYTES_PER_SAMPLE, ClassSchedule, EmitterProfile, FeatureConfig, IQTrace, LatencyReport, MlpModel, StreamStats,
    StreamWindow, WindowResult,
)
from emtriage.utils.emitter import default_profiles, iter_live_chunks, synth_trace
from emtriage.utils.features import make_features
from emtriage.utils.mlp import predict
from emtriage.utils.trace_io import decode_samples, encode_samples

logger = logging.getLogger(__name__)

Endpoint = tuple[str, int]
StreamSource = Union[IQTrace, tuple[EmitterProfile, ClassSchedule]]

DEFAULT_DEADLINE_MS = 200.0
DEFAULT_QUEUE_DEPTH = 16
DEFAULT_CHUNK_S = 0.01
_RECV_BYTES = 1 << 20
_EOF = object()


def parse_endpoint(text: str) -> Endpoint:
    """'host:port' 또는 ':port' → (host, port)"""
    host, sep, port = text.rpartition(':')
    if not sep:
        raise InvalidArgumentError(f"endpoint는 host:port 형식이어야 합니다: {text!r}")
    try:
        port_no = int(port)
    except ValueError:
        raise InvalidArgumentError(f"포트 번호가 잘못되었습니다: {text!r}") from None
    if not 0 <= port_no <= 65535:
        raise InvalidArgumentError(f"포트 범위 초과: {port_no}")
    return (host.strip('[]') or '127.0.0.1'), port_no


# ------------------------------------------------------------
# 송신
# ------------------------------------------------------------

def _source_chunks(source: StreamSource, rate_hz: float, chunk_s: float, total_s: Optional[float], seed: int) -> Iterator[bytes]:
    if isinstance(source, IQTrace):
        payload = memoryview(encode_samples(source.samples))
        step = max(1, int(round(chunk_s * rate_hz))) * BYTES_PER_SAMPLE
        limit = len(payload)
        if total_s is not None:
            limit = min(limit, int(round(total_s * rate_hz)) * BYTES_PER_SAMPLE)
        for start in range(0, limit, step):
            yield payload[start:min(start + step, limit)]
        return
    profile, schedule = source
    for samples in iter_live_chunks(profile, schedule, rate_hz, chunk_s, total_s, seed):
        yield encode_samples(samples)


def serve_stream(
    source: StreamSource,
    rate_hz: float,
    endpoint: Endpoint,
    *,
    chunk_s: float = DEFAULT_CHUNK_S,
    total_s: Optional[float] = None,
    seed: int = 0,
    on_ready: Optional[Callable[[Endpoint], None]] = None,
    stop_event: Optional[threading.Event] = None,
    accept_timeout_s: Optional[float] = 60.0,
) -> int:
    """클라이언트 1개에 raw cf32를 실시간 속도로 송신. 보낸 바이트 수 반환.

    클라이언트가 먼저 끊으면 정상 종료로 처리한다.
    """
    if not rate_hz > 0:
        raise InvalidArgumentError(f"rate_hz는 양수여야 합니다: {rate_hz}")
    if not chunk_s > 0:
        raise InvalidArgumentError(f"chunk_s는 양수여야 합니다: {chunk_s}")

    try:
        server = socket.create_server(endpoint, reuse_port=False)
    except OSError as e:
        raise StreamError(f"bind 실패: {endpoint[0]}:{endpoint[1]}: {e}") from e

    sent = 0
    with server:
        bound = server.getsockname()[:2]
        logger.info(f'스트림 서버 대기: {bound[0]}:{bound[1]} rate={rate_hz:g} Hz')
        if on_ready is not None:
            on_ready(bound)
        server.settimeout(accept_timeout_s)
        try:
            conn, peer = server.accept()
        except socket.timeout as e:
            raise StreamError(f"accept 타임아웃 ({accept_timeout_s}s): {bound[0]}:{bound[1]}") from e
        except OSError as e:
            raise StreamError(f"accept 실패: {e}") from e

        logger.info(f'스트림 클라이언트 연결: {peer[0]}:{peer[1]}')
        bytes_per_s = BYTES_PER_SAMPLE * rate_hz
        with conn:
            t0 = time.monotonic()
            try:
                for chunk in _source_chunks(source, rate_hz, chunk_s, total_s, seed):
                    if stop_event is not None and stop_event.is_set():
                        break
                    conn.sendall(chunk)
                    sent += len(chunk)
                    # 누적 전송량 기준 페이싱 (오차가 쌓이지 않음)
                    wait = t0 + sent / bytes_per_s - time.monotonic()
                    if wait > 0:
                        time.sleep(wait)
            except (BrokenPipeError, ConnectionResetError, ConnectionAbortedError):
                logger.info(f'클라이언트 연결 종료: sent={sent} bytes')
                return sent
            except OSError as e:
                raise StreamError(f"송신 실패 (sent={sent} bytes): {e}") from e
            try:
                conn.shutdown(socket.SHUT_WR)
            except OSError:
                pass
            elapsed = time.monotonic() - t0

    logger.info(f'스트림 송신 완료: {sent} bytes in {elapsed:.3f}s ({sent / max(elapsed, 1e-9) / 1e6:.1f} MB/s)')
    return sent


# ------------------------------------------------------------
# 수신 / 분류
# ------------------------------------------------------------

def _put(out: 'queue.Queue', item: object, stop: threading.Event) -> bool:
    """큐에 넣을 때까지 기다린다. 소비자가 먼저 끝나면 False."""
    while not stop.is_set():
        try:
            out.put(item, timeout=0.1)
            return True
        except queue.Full:
            continue
    return False


def _reader(
    sock: socket.socket,
    out: 'queue.Queue',
    window_bytes: int,
    hop_bytes: int,
    stats: StreamStats,
    stop: threading.Event,
) -> None:
    buf = bytearray()
    seq = 0
    try:
        while not stop.is_set():
            data = sock.recv(_RECV_BYTES)
            if not data:
                break
            buf += data
            while len(buf) >= window_bytes:
                window = StreamWindow(
                    seq=seq,
                    samples=decode_samples(bytes(buf[:window_bytes])),
                    received_at=time.monotonic(),
                )
                del buf[:hop_bytes]
                seq += 1
                try:
                    out.put_nowait(window)
                except queue.Full:
                    # 큐가 가득 차면 기다린다 (버리지 않음)
                    stats.backpressure_events += 1
                    if not _put(out, window, stop):
                        return

        tail = len(buf) % BYTES_PER_SAMPLE
        if tail:
            stats.truncated_tail_bytes = tail
            logger.warning(f'스트림이 샘플 경계가 아닌 곳에서 끝났습니다: 남은 {tail} bytes 버림')
        if len(buf) >= BYTES_PER_SAMPLE:
            logger.debug(f'마지막 부분 윈도우 버림: {len(buf) // BYTES_PER_SAMPLE} samples')
        _put(out, _EOF, stop)
    except Exception as e:  # noqa: BLE001 - 소비자 쪽에서 다시 던진다
        if stop.is_set():
            return
        _put(out, e, stop)


def consume_stream(
    endpoint: Endpoint,
    window_s: float,
    model: MlpModel,
    feature_config: FeatureConfig,
    *,
    sample_rate_hz: float,
    deadline_ms: float = DEFAULT_DEADLINE_MS,
    queue_depth: int = DEFAULT_QUEUE_DEPTH,
    hop_s: Optional[float] = None,
    stats: Optional[StreamStats] = None,
    connect_timeout_s: float = 10.0,
) -> Iterator[WindowResult]:
    """고정 길이 윈도우로 재조립 → make_features → predict. 결과는 seq 순서로 생성.

    hop_s를 주면 window_s보다 짧은 간격으로 겹치는 윈도우를 만든다 (기본: 겹침 없음).
    """
    if not sample_rate_hz > 0:
        raise InvalidArgumentError(f"sample_rate_hz는 양수여야 합니다: {sample_rate_hz}")
    window_len = int(round(window_s * sample_rate_hz))
    if window_len < 1:
        raise InvalidArgumentError(f"윈도우 길이가 0입니다: window_s={window_s}, rate={sample_rate_hz:g}")
    hop_len = window_len if hop_s is None else int(round(hop_s * sample_rate_hz))
    if not 1 <= hop_len <= window_len:
        raise InvalidArgumentError(f"hop_s는 (0, window_s] 범위여야 합니다: {hop_s}")
    if feature_config.segment_s > window_s + 1e-12:
        raise InvalidArgumentError(f"segment_s({feature_config.segment_s:g})가 window_s({window_s:g})보다 깁니다")
    if model.input_dim != feature_config.n_buckets:
        raise ShapeError(model.input_dim, feature_config.n_buckets, what='model input / n_buckets')
    if queue_depth < 1:
        raise InvalidArgumentError(f"queue_depth는 1 이상이어야 합니다: {queue_depth}")

    stats = stats if stats is not None else StreamStats()
    try:
        sock = socket.create_connection(endpoint, timeout=connect_timeout_s)
    except OSError as e:
        raise StreamError(f"연결 실패: {endpoint[0]}:{endpoint[1]}: {e}") from e
    sock.settimeout(None)
    logger.info(
        f'스트림 수신 시작: {endpoint[0]}:{endpoint[1]} window={window_len} samples, hop={hop_len}, '
        f'deadline={deadline_ms:g} ms'
    )
    return _classify_windows(
        sock, window_len, hop_len, model, feature_config, sample_rate_hz, deadline_ms, queue_depth, stats
    )


def _classify_windows(
    sock: socket.socket,
    window_len: int,
    hop_len: int,
    model: MlpModel,
    feature_config: FeatureConfig,
    sample_rate_hz: float,
    deadline_ms: float,
    queue_depth: int,
    stats: StreamStats,
) -> Iterator[WindowResult]:
    windows: 'queue.Queue' = queue.Queue(maxsize=queue_depth)
    stop = threading.Event()
    reader = threading.Thread(
        target=_reader,
        args=(sock, windows, window_len * BYTES_PER_SAMPLE, hop_len * BYTES_PER_SAMPLE, stats, stop),
        name='emtriage-stream-reader',
        daemon=True,
    )
    reader.start()

    try:
        while True:
            item = windows.get()
            if item is _EOF:
                break
            if isinstance(item, BaseException):
                if isinstance(item, EmTriageError):
                    raise item
                raise StreamError(f"스트림 수신 오류: {item}") from item

            started = time.monotonic()
            trace = IQTrace(samples=item.samples, sample_rate_hz=sample_rate_hz)
            class_name, scores = predict(model, make_features(trace, feature_config).values)
            done = time.monotonic()

            delay_ms = (done - started) * 1000.0
            overrun = delay_ms > deadline_ms
            stats.windows += 1
            stats.samples += hop_len
            stats.delays_ms.append(delay_ms)
            if overrun:
                stats.overruns += 1
                logger.warning(f'deadline 초과: seq={item.seq} delay={delay_ms:.1f} ms > {deadline_ms:g} ms')

            yield WindowResult(
                seq=item.seq,
                class_name=class_name,
                score=float(np.max(scores)),
                processing_delay_ms=delay_ms,
                queue_delay_ms=(started - item.received_at) * 1000.0,
                overrun=overrun,
            )
    finally:
        stop.set()
        try:
            sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        sock.close()
        reader.join(timeout=2.0)
        logger.info(
            f'스트림 수신 종료: windows={stats.windows}, overruns={stats.overruns}, '
            f'backpressure={stats.backpressure_events}'
        )


# ------------------------------------------------------------
# 지연 벤치마크
# ------------------------------------------------------------

def latency_report(
    delays_ms: Iterable[float],
    sample_rate_hz: float,
    window_len_samples: int,
    deadline_ms: float,
    backpressure_events: int = 0,
) -> LatencyReport:
    d = np.asarray(list(delays_ms), dtype=np.float64)
    if d.size == 0:
        raise InvalidArgumentError("처리된 윈도우가 없습니다")
    return LatencyReport(
        sample_rate_hz=float(sample_rate_hz),
        window_len_samples=int(window_len_samples),
        n_windows=int(d.size),
        min_ms=float(d.min()),
        mean_ms=float(d.mean()),
        p95_ms=float(np.percentile(d, 95)),
        max_ms=float(d.max()),
        deadline_ms=float(deadline_ms),
        overruns=int(np.sum(d > deadline_ms)),
        backpressure_events=int(backpressure_events),
    )


def benchmark_latency(
    rates: Iterable[float],
    window_s: float,
    model: MlpModel,
    feature_config: FeatureConfig,
    *,
    n_windows: int = 100,
    profile: Optional[EmitterProfile] = None,
    class_id: Optional[str] = None,
    seed: int = 0,
    deadline_ms: float = DEFAULT_DEADLINE_MS,
    queue_depth: int = DEFAULT_QUEUE_DEPTH,
    host: str = '127.0.0.1',
) -> list[LatencyReport]:
    """rate별 loopback serve + consume → LatencyReport 목록 (입력 rate 순서)"""
    rates = [float(r) for r in rates]
    if n_windows < 1:
        raise InvalidArgumentError(f"n_windows는 1 이상이어야 합니다: {n_windows}")
    if not rates or any(not r > 0 for r in rates):
        raise InvalidArgumentError(f"rate는 양수여야 합니다: {rates}")
    if profile is None:
        profile = default_profiles()[1]
    class_id = class_id or profile.class_ids[0]

    reports = []
    for rate in rates:
        trace = synth_trace(profile, class_id, n_windows * window_s, rate, seed)
        ready = threading.Event()
        bound: list[Endpoint] = []
        errors: list[BaseException] = []

        def _on_ready(ep: Endpoint) -> None:
            bound.append(ep)
            ready.set()

        def _serve() -> None:
            try:
                serve_stream(trace, rate, (host, 0), on_ready=_on_ready, accept_timeout_s=30.0)
            except BaseException as e:  # noqa: BLE001
                errors.append(e)
                ready.set()

        server = threading.Thread(target=_serve, name=f'emtriage-bench-{rate:g}', daemon=True)
        server.start()
        ready.wait(timeout=30.0)
        if errors or not bound:
            raise errors[0] if errors else StreamError("벤치마크 서버가 준비되지 않았습니다")

        stats = StreamStats()
        for _ in consume_stream(
            bound[0], window_s, model, feature_config,
            sample_rate_hz=rate, deadline_ms=deadline_ms, queue_depth=queue_depth, stats=stats,
        ):
            pass
        server.join(timeout=30.0)
        if errors:
            raise errors[0]

        report = latency_report(
            stats.delays_ms, rate, int(round(window_s * rate)), deadline_ms, stats.backpressure_events
        )
        logger.info(
            f'latency @ {rate / 1e6:g} MHz: mean={report.mean_ms:.2f} ms p95={report.p95_ms:.2f} ms '
            f'max={report.max_ms:.2f} ms overruns={report.overruns}'
        )
        reports.append(report)
    return reports
