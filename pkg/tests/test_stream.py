import socket
import threading

import pytest

from emtriage.errors import InvalidArgumentError, ShapeError, StreamError
from emtriage.models import ClassSchedule, FeatureConfig, MlpConfig, StreamStats
from emtriage.utils import mlp
from emtriage.utils.corpus import trace_seed
from emtriage.utils.emitter import synth_trace
from emtriage.utils.features import batch_features
from emtriage.utils.stream import benchmark_latency, consume_stream, latency_report, parse_endpoint, serve_stream
from emtriage.utils.trace_io import encode_samples

RATE = 1e6
FEATURES = FeatureConfig(segment_s=0.01, n_buckets=50, reduction='mean')


@pytest.fixture(scope='module')
def tiny_model(tiny_profile):
    traces = (
        synth_trace(tiny_profile, c, 0.01, RATE, trace_seed(0, c, i))
        for c in tiny_profile.class_ids
        for i in range(20)
    )
    return mlp.train(batch_features(traces, FEATURES), MlpConfig(hidden_layers=(10,), epochs=200, seed=0))


def _serve_in_background(source, rate=RATE, **kwargs):
    ready = threading.Event()
    bound = []
    result = {}

    def _on_ready(ep):
        bound.append(ep)
        ready.set()

    def _run():
        result['sent'] = serve_stream(source, rate, ('127.0.0.1', 0), on_ready=_on_ready, accept_timeout_s=10.0, **kwargs)

    thread = threading.Thread(target=_run, daemon=True)
    thread.start()
    assert ready.wait(timeout=10.0)
    return bound[0], thread, result


def _free_port():
    with socket.socket() as s:
        s.bind(('127.0.0.1', 0))
        return s.getsockname()[1]


@pytest.mark.parametrize('text, expected', [
    ('127.0.0.1:5555', ('127.0.0.1', 5555)),
    (':6000', ('127.0.0.1', 6000)),
    ('[::1]:7000', ('::1', 7000)),
])
def test_parse_endpoint(text, expected):
    assert parse_endpoint(text) == expected


@pytest.mark.parametrize('text', ['localhost', 'host:abc', 'host:70000'])
def test_parse_endpoint_rejects(text):
    with pytest.raises(InvalidArgumentError):
        parse_endpoint(text)


def test_serve_rejects_zero_rate(tiny_profile):
    trace = synth_trace(tiny_profile, 'idle', 0.01, RATE, 0)
    with pytest.raises(InvalidArgumentError):
        serve_stream(trace, 0.0, ('127.0.0.1', 0))


def test_serve_bind_failure(tiny_profile):
    trace = synth_trace(tiny_profile, 'idle', 0.01, RATE, 0)
    with socket.create_server(('127.0.0.1', 0)) as busy:
        port = busy.getsockname()[1]
        with pytest.raises(StreamError):
            serve_stream(trace, RATE, ('127.0.0.1', port))


def test_serve_accept_timeout(tiny_profile):
    trace = synth_trace(tiny_profile, 'idle', 0.01, RATE, 0)
    with pytest.raises(StreamError):
        serve_stream(trace, RATE, ('127.0.0.1', 0), accept_timeout_s=0.2)


def test_consume_connection_refused(tiny_model):
    with pytest.raises(StreamError):
        consume_stream(('127.0.0.1', _free_port()), 0.01, tiny_model, FEATURES, sample_rate_hz=RATE)


def test_consume_validates_before_connecting(tiny_model):
    # 아무도 듣지 않는 포트여도 인자 오류가 먼저 난다
    port = _free_port()
    with pytest.raises(ShapeError):
        consume_stream(('127.0.0.1', port), 0.01, tiny_model, FeatureConfig(segment_s=0.01, n_buckets=40),
                       sample_rate_hz=RATE)
    with pytest.raises(InvalidArgumentError):
        consume_stream(('127.0.0.1', port), 0.005, tiny_model, FEATURES, sample_rate_hz=RATE)
    with pytest.raises(InvalidArgumentError):
        consume_stream(('127.0.0.1', port), 0.01, tiny_model, FEATURES, sample_rate_hz=RATE, hop_s=0.02)
    with pytest.raises(InvalidArgumentError):
        consume_stream(('127.0.0.1', port), 0.01, tiny_model, FEATURES, sample_rate_hz=0)


def test_loopback_classifies_every_window(tiny_profile, tiny_model):
    trace = synth_trace(tiny_profile, 'busy', 0.05, RATE, 123)
    endpoint, thread, result = _serve_in_background(trace)

    stats = StreamStats()
    results = list(consume_stream(endpoint, 0.01, tiny_model, FEATURES, sample_rate_hz=RATE, stats=stats))
    thread.join(timeout=10.0)

    assert [r.seq for r in results] == [0, 1, 2, 3, 4]
    assert [r.class_name for r in results] == ['busy'] * 5
    assert all(0.0 < r.score <= 1.0 for r in results)
    assert stats.windows == 5
    assert stats.overruns == 0
    assert stats.truncated_tail_bytes == 0
    assert result['sent'] == 50000 * 8


def test_overlapping_windows(tiny_profile, tiny_model):
    trace = synth_trace(tiny_profile, 'idle', 0.05, RATE, 5)
    endpoint, thread, _ = _serve_in_background(trace)

    results = list(consume_stream(endpoint, 0.01, tiny_model, FEATURES, sample_rate_hz=RATE, hop_s=0.005))
    thread.join(timeout=10.0)

    # (50000 - 10000) / 5000 + 1
    assert len(results) == 9
    assert [r.seq for r in results] == list(range(9))


def test_live_schedule_source(tiny_profile, tiny_model):
    schedule = ClassSchedule.parse('0:idle,0.03:sleep')
    endpoint, thread, result = _serve_in_background((tiny_profile, schedule), total_s=0.06, chunk_s=0.01)
    labels = [r.class_name for r in consume_stream(endpoint, 0.01, tiny_model, FEATURES, sample_rate_hz=RATE)]
    thread.join(timeout=10.0)

    assert labels == ['idle'] * 3 + ['sleep'] * 3
    assert result['sent'] == 60000 * 8


def test_partial_trailing_sample_is_dropped(tiny_profile, tiny_model):
    payload = encode_samples(synth_trace(tiny_profile, 'idle', 0.01, RATE, 9).samples) + b'\x01\x02\x03'
    server = socket.create_server(('127.0.0.1', 0))

    def _send():
        conn, _ = server.accept()
        with conn:
            conn.sendall(payload)

    thread = threading.Thread(target=_send, daemon=True)
    thread.start()
    stats = StreamStats()
    with server:
        results = list(consume_stream(server.getsockname()[:2], 0.01, tiny_model, FEATURES,
                                      sample_rate_hz=RATE, stats=stats))
    thread.join(timeout=10.0)

    assert len(results) == 1
    assert stats.truncated_tail_bytes == 3


def test_latency_report():
    report = latency_report([1.0, 2.0, 3.0, 4.0, 250.0], 4e6, 40000, 200.0, backpressure_events=2)
    assert report.n_windows == 5
    assert report.min_ms == 1.0
    assert report.max_ms == 250.0
    assert report.mean_ms == pytest.approx(52.0)
    assert report.overruns == 1
    assert report.backpressure_events == 2
    with pytest.raises(InvalidArgumentError):
        latency_report([], 4e6, 40000, 200.0)


def test_benchmark_latency(tiny_profile, tiny_model):
    reports = benchmark_latency([RATE], 0.01, tiny_model, FEATURES, n_windows=10, profile=tiny_profile, class_id='idle')
    assert len(reports) == 1
    report = reports[0]
    assert report.sample_rate_hz == RATE
    assert report.window_len_samples == 10000
    assert report.n_windows == 10
    assert report.overruns == 0
    assert report.min_ms <= report.p95_ms <= report.max_ms


def test_benchmark_rejects_bad_arguments(tiny_model):
    with pytest.raises(InvalidArgumentError):
        benchmark_latency([], 0.01, tiny_model, FEATURES)
    with pytest.raises(InvalidArgumentError):
        benchmark_latency([RATE], 0.01, tiny_model, FEATURES, n_windows=0)
