import errno
from datetime import datetime, timezone

import numpy as np
import pytest

from emtriage.errors import CorruptSampleError, InvalidArgumentError, MalformedTraceError
from emtriage.models import IQTrace
from emtriage.utils import trace_io
from emtriage.utils.trace_io import (
    decode_samples, encode_samples, read_sidecar, read_trace, sidecar_path, write_trace,
)


def _trace(n=64, seed=0, **kw):
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return IQTrace(samples=samples, sample_rate_hz=kw.pop('rate', 1e6), **kw)


def test_write_then_read_keeps_samples_and_metadata(tmp_path):
    trace = _trace(
        center_freq_hz=288e6, label='prog3', seed=42,
        captured_at=datetime(2024, 5, 1, 12, 0, tzinfo=timezone.utc),
    )
    path = write_trace(trace, tmp_path / 'a.cf32')
    assert path.stat().st_size == trace.n_samples * 8
    assert read_trace(path) == trace


def test_payload_is_interleaved_little_endian_float32(tmp_path):
    trace = IQTrace(samples=np.array([1 + 2j, -3 + 0.5j]), sample_rate_hz=1e6)
    path = write_trace(trace, tmp_path / 'b.cf32')
    raw = np.fromfile(path, dtype='<f4')
    assert raw.tolist() == [1.0, 2.0, -3.0, 0.5]


def test_captured_at_accepts_z_suffix(tmp_path):
    path = write_trace(_trace(), tmp_path / 'c.cf32')
    meta = sidecar_path(path)
    meta.write_text(meta.read_text(encoding='utf-8') + 'captured_at=2024-05-01T12:00:00Z\n', encoding='utf-8')
    assert read_trace(path).captured_at == datetime(2024, 5, 1, 12, 0, tzinfo=timezone.utc)


def test_unknown_sidecar_keys_survive_rewrite(tmp_path):
    path = write_trace(_trace(), tmp_path / 'd.cf32')
    meta = sidecar_path(path)
    meta.write_text(meta.read_text(encoding='utf-8') + 'antenna=loop-3cm\n', encoding='utf-8')

    again = write_trace(read_trace(path), tmp_path / 'e.cf32')
    assert read_sidecar(again)['antenna'] == 'loop-3cm'


def test_missing_sidecar_requires_rate(tmp_path):
    path = tmp_path / 'raw.cf32'
    path.write_bytes(encode_samples(np.ones(4, dtype=np.complex64)))
    with pytest.raises(InvalidArgumentError):
        read_trace(path)
    trace = read_trace(path, sample_rate_hz=2e6, label='idle')
    assert trace.sample_rate_hz == 2e6
    assert trace.label == 'idle'
    assert trace.n_samples == 4


def test_truncated_payload_is_rejected(tmp_path):
    path = tmp_path / 'cut.cf32'
    path.write_bytes(encode_samples(np.ones(4, dtype=np.complex64))[:-3])
    with pytest.raises(MalformedTraceError):
        read_trace(path, sample_rate_hz=1e6)


def test_non_finite_sample_reports_index(tmp_path):
    floats = np.zeros(16, dtype='<f4')
    floats[7] = np.nan  # sample 3, Q
    path = tmp_path / 'nan.cf32'
    path.write_bytes(floats.tobytes())
    with pytest.raises(CorruptSampleError) as exc:
        read_trace(path, sample_rate_hz=1e6)
    assert exc.value.index == 3


def test_decode_rejects_odd_float_count():
    with pytest.raises(MalformedTraceError):
        decode_samples(np.zeros(3, dtype='<f4').tobytes())


def test_encode_decode_matches_complex64():
    x = np.array([0.25 - 1j, 3 + 4j], dtype=np.complex64)
    assert np.array_equal(decode_samples(encode_samples(x)), x)


def test_trace_rejects_non_positive_rate():
    with pytest.raises(InvalidArgumentError):
        IQTrace(samples=np.zeros(4), sample_rate_hz=0.0)


def test_trace_samples_are_read_only():
    trace = _trace()
    with pytest.raises(ValueError):
        trace.samples[0] = 0


def test_label_whitespace_survives_write_and_read(tmp_path):
    trace = _trace(label=' prog1 ', extra={'operator': '  kim  '})
    back = read_trace(write_trace(trace, tmp_path / 'ws.cf32'))
    assert back.label == ' prog1 '
    assert back.extra == {'operator': '  kim  '}
    assert back == trace


@pytest.mark.parametrize('label', ['prog1\nseed=7', 'a\rb', 'k=v'])
def test_label_that_would_break_sidecar_is_rejected(label):
    with pytest.raises(InvalidArgumentError):
        _trace(label=label)


@pytest.mark.parametrize('extra', [{'bad\nkey': 'x'}, {'k=v': 'x'}, {' pad': 'x'}, {'note': 'two\nlines'}])
def test_extra_that_would_break_sidecar_is_rejected(extra):
    with pytest.raises(InvalidArgumentError):
        _trace(extra=extra)


def test_hand_edited_sidecar_with_bad_label_is_malformed(tmp_path):
    path = write_trace(_trace(label='prog1'), tmp_path / 'e.cf32')
    meta = sidecar_path(path)
    meta.write_text(meta.read_text(encoding='utf-8').replace('label=prog1', 'label=prog1=x'), encoding='utf-8')
    with pytest.raises(MalformedTraceError):
        read_trace(path)


def test_failed_write_leaves_no_tmp_file(tmp_path, monkeypatch):
    def _disk_full(samples):
        raise OSError(errno.ENOSPC, 'No space left on device')

    monkeypatch.setattr(trace_io, 'encode_samples', _disk_full)
    with pytest.raises(OSError):
        write_trace(_trace(), tmp_path / 'full.cf32')
    assert list(tmp_path.iterdir()) == []
