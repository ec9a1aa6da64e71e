import pytest

from emtriage.errors import ProfileFormatError
from emtriage.models import ProgramClassSpec
from emtriage.utils.profiles import (
    builtin_profiles, dumps_profile, load_profile, loads_profile, resolve_profile, save_profile,
)


def test_builtin_names():
    assert sorted(builtin_profiles()) == ['high_end', 'low_end']


def test_profile_file_round_trip(tmp_path, low_end):
    path = save_profile(low_end, tmp_path / 'profiles' / 'low_end.profile')
    assert load_profile(path) == low_end
    assert resolve_profile(str(path)) == low_end


def test_duty_pattern_is_written(tiny_profile):
    profile = tiny_profile.with_classes([ProgramClassSpec('blink', ((10e3, 0.5),), (0.001, 0.25))])
    text = dumps_profile(profile)
    assert 'duty=0.001:0.25' in text
    assert loads_profile(text).classes[0].duty_pattern == (0.001, 0.25)


def test_resolve_by_name(high_end):
    assert resolve_profile('high_end') == high_end


def test_resolve_unknown_name():
    with pytest.raises(ProfileFormatError):
        resolve_profile('mid_range')


@pytest.mark.parametrize('text', [
    'schema_version=2\nname=x\n',
    'name=x\ncarrier_freq_hz=1\n',
    ('schema_version=1\nname=x\ncarrier_freq_hz=1e6\nharmonic_index=1\nnoise_floor_db=-30\n'
     'impulse_rate_hz=0\nimpulse_gain_db=0\n[class a]\nduty=0.1:0.5\n'),
    ('schema_version=1\nname=x\ncarrier_freq_hz=1e6\nharmonic_index=1\nnoise_floor_db=-30\n'
     'impulse_rate_hz=0\nimpulse_gain_db=0\n[class a]\ntones=10000:2.0\n'),
    'schema_version=1\nthis line has no equals\n',
])
def test_malformed_profiles(text):
    with pytest.raises(ProfileFormatError):
        loads_profile(text)
