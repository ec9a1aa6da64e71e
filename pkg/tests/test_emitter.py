from dataclasses import replace

import numpy as np
import pytest

from emtriage.errors import InvalidArgumentError, UnknownClassError
from emtriage.models import ClassSchedule, EmitterProfile, ProgramClassSpec
from emtriage.utils.emitter import (
    ADC_FULL_SCALE, iter_live_chunks, synth_crypto_session, synth_scheduled, synth_trace, tampered_variants,
)
from emtriage.utils.resample import tone_magnitude


def test_default_profiles(high_end, low_end):
    assert high_end.class_ids == ['other', 'aes256', 'aes128', '3des']
    assert low_end.class_ids == [f'prog{i}' for i in range(10)]
    assert low_end.emission_freq_hz == pytest.approx(288e6)
    assert high_end.emission_freq_hz == pytest.approx(1.4e9)


def test_same_seed_same_samples(low_end):
    a = synth_trace(low_end, 'prog3', 0.002, 2e6, seed=7)
    b = synth_trace(low_end, 'prog3', 0.002, 2e6, seed=7)
    c = synth_trace(low_end, 'prog3', 0.002, 2e6, seed=8)
    assert a == b
    assert not np.array_equal(a.samples, c.samples)


def test_trace_metadata(low_end):
    trace = synth_trace(low_end, 'prog1', 0.01, 20e6, seed=1)
    assert trace.n_samples == 200_000
    assert trace.label == 'prog1'
    assert trace.seed == 1
    assert trace.center_freq_hz == pytest.approx(288e6)


def test_unknown_class_lists_known(low_end):
    with pytest.raises(UnknownClassError) as exc:
        synth_trace(low_end, 'prog42', 0.001, 1e6, seed=0)
    assert isinstance(exc.value, LookupError)
    assert 'prog9' in str(exc.value)


def test_tone_outside_band_is_rejected(high_end):
    # 3des는 2.1 MHz 톤 → 4 MHz 샘플링(±2 MHz)으로 표현 불가
    with pytest.raises(InvalidArgumentError):
        synth_trace(high_end, '3des', 0.001, 4e6, seed=0)


def test_envelope_sidebands_mark_the_class(low_end):
    prog0 = synth_trace(low_end, 'prog0', 0.01, 4e6, seed=3)
    prog1 = synth_trace(low_end, 'prog1', 0.01, 4e6, seed=3)
    # AM 톤 a는 ±f에 a/2 크기의 측파대를 만든다
    assert tone_magnitude(prog1.samples, 4e6, 600e3) == pytest.approx(0.1, abs=0.02)
    assert tone_magnitude(prog0.samples, 4e6, 600e3) < 0.02
    assert tone_magnitude(prog0.samples, 4e6, 0.0) == pytest.approx(1.0, abs=0.05)


def test_adc_quantization_grid(low_end):
    trace = synth_trace(low_end, 'prog0', 0.001, 1e6, seed=0)
    step = ADC_FULL_SCALE / 2 ** (low_end.adc_bits - 1)
    levels = trace.samples.real / step
    assert np.allclose(levels, np.round(levels), atol=1e-4)


def test_crypto_session_gaps_hold_only_noise(low_end):
    rate = 1e6
    trace = synth_crypto_session(low_end, 'prog0', n_bursts=2, gap_s=0.005, burst_s=0.01,
                                 sample_rate_hz=rate, seed=5)
    assert trace.n_samples == 25_000
    burst = np.abs(trace.samples[:10_000]).mean()
    gap = np.abs(trace.samples[10_000:15_000]).mean()
    assert burst > 0.8
    assert gap < 0.1


def test_crypto_session_validation(low_end):
    with pytest.raises(InvalidArgumentError):
        synth_crypto_session(low_end, 'prog0', 0, 0.001, 0.001, 1e6, seed=0)
    with pytest.raises(InvalidArgumentError):
        synth_crypto_session(low_end, 'prog0', 2, -0.001, 0.001, 1e6, seed=0)


def test_schedule_parse_and_lookup():
    schedule = ClassSchedule.parse('2.5:prog5, 0:prog3')
    assert schedule.entries == ((0.0, 'prog3'), (2.5, 'prog5'))
    assert schedule.class_at(1.0) == 'prog3'
    assert schedule.class_at(2.5) == 'prog5'
    with pytest.raises(InvalidArgumentError):
        ClassSchedule.parse('1:prog3')
    with pytest.raises(InvalidArgumentError):
        ClassSchedule.parse('prog3')


def test_scheduled_trace_switches_class(low_end):
    schedule = ClassSchedule.parse('0:prog0,0.005:prog1')
    trace = synth_scheduled(low_end, schedule, 0.01, 4e6, seed=2)
    assert trace.label is None
    first, second = trace.samples[:20_000], trace.samples[20_000:]
    assert tone_magnitude(first, 4e6, 600e3) < 0.02
    assert tone_magnitude(second, 4e6, 600e3) == pytest.approx(0.1, abs=0.02)


def test_live_chunks_cover_total_duration(low_end):
    schedule = ClassSchedule.parse('0:prog0')
    chunks = list(iter_live_chunks(low_end, schedule, 1e6, 0.01, 0.025, seed=0))
    assert [c.shape[0] for c in chunks] == [10_000, 10_000, 5_000]


def test_live_chunks_without_total_are_endless(low_end):
    schedule = ClassSchedule.parse('0:prog0')
    it = iter_live_chunks(low_end, schedule, 1e6, 0.001, None, seed=0)
    assert all(next(it).shape[0] == 1000 for _ in range(5))


def test_tampered_variants_differ_from_base(low_end):
    base = low_end.get_class('prog0')
    variants = tampered_variants(low_end, 'prog0', 20, seed=11)
    assert len(variants) == 20
    assert len({v.class_id for v in variants}) == 20
    for v in variants:
        assert v.envelope_tones != base.envelope_tones
        assert v.max_offset_hz < 10e6
    assert tampered_variants(low_end, 'prog0', 20, seed=11) == variants


def test_tampered_variants_render_with_extended_profile(low_end):
    variants = tampered_variants(low_end, 'prog0', 3, seed=0)
    extended = low_end.with_classes([*low_end.classes, *variants])
    trace = synth_trace(extended, variants[0].class_id, 0.001, 20e6, seed=0)
    assert trace.label == 'prog0-mod00'


def test_profile_validation():
    with pytest.raises(InvalidArgumentError):
        ProgramClassSpec('bad', ())
    with pytest.raises(InvalidArgumentError):
        ProgramClassSpec('bad', ((1e3, 1.5),))
    spec = ProgramClassSpec('a', ((1e3, 0.5),))
    with pytest.raises(InvalidArgumentError):
        EmitterProfile('p', 1e6, 1, 0.0, 0.0, 0.0, (spec,))
    with pytest.raises(InvalidArgumentError):
        EmitterProfile('p', 1e6, 1, -30.0, 0.0, 0.0, (spec, spec))


def _out_of_tone_rms(trace, tone_freqs, guard_hz=500.0):
    n = trace.n_samples
    freqs = np.fft.fftshift(np.fft.fftfreq(n, 1.0 / trace.sample_rate_hz))
    spectrum = np.fft.fftshift(np.fft.fft(trace.samples.astype(np.complex128))) / n
    keep = np.ones(n, dtype=bool)
    for f in (0.0, *tone_freqs, *(-f for f in tone_freqs)):
        keep &= np.abs(freqs - f) > guard_hz
    return float(np.sqrt(np.mean(np.abs(spectrum[keep]) ** 2)))


def test_doubling_noise_amplitude_doubles_out_of_tone_rms(tiny_profile):
    # +20·log10(2) dB = 잡음 진폭 2배
    louder = replace(tiny_profile, noise_floor_db=tiny_profile.noise_floor_db + 20.0 * np.log10(2.0))
    base = synth_trace(tiny_profile, 'busy', 0.01, 1e6, seed=11)
    double = synth_trace(louder, 'busy', 0.01, 1e6, seed=11)
    ratio = _out_of_tone_rms(double, [80e3]) / _out_of_tone_rms(base, [80e3])
    assert ratio == pytest.approx(2.0, rel=0.10)
