"""
공용 fixture

config.py는 import 시점에 환경변수를 읽으므로, emtriage를 import하기 전에
로그/결과 디렉토리를 임시 경로로 돌려 둔다.
"""
import os
import tempfile

_TMP_ROOT = tempfile.mkdtemp(prefix='emtriage-tests-')
os.environ.setdefault('EMTRIAGE_ENV', 'testing')
os.environ.setdefault('EMTRIAGE_LOG_DIR', os.path.join(_TMP_ROOT, 'logs'))
os.environ.setdefault('EMTRIAGE_RESULTS_DIR', os.path.join(_TMP_ROOT, 'results'))
os.environ.setdefault('EMTRIAGE_PROFILES_DIR', os.path.join(_TMP_ROOT, 'profiles'))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from emtriage import create_app  # noqa: E402
from emtriage.models import Dataset, EmitterProfile, ProgramClassSpec  # noqa: E402
from emtriage.utils.emitter import default_profiles  # noqa: E402


@pytest.fixture(scope='session')
def cfg():
    return create_app('testing')


@pytest.fixture(scope='session')
def high_end():
    return default_profiles()[0]


@pytest.fixture(scope='session')
def low_end():
    return default_profiles()[1]


@pytest.fixture(scope='session')
def tiny_profile():
    """1 MHz에서도 쓸 수 있는 3클래스 프로파일 (톤 ≤ 200 kHz, 임펄스/양자화 없음)"""
    return EmitterProfile(
        name='tiny',
        carrier_freq_hz=10e6,
        harmonic_index=1,
        noise_floor_db=-30.0,
        impulse_rate_hz=0.0,
        impulse_gain_db=0.0,
        classes=(
            ProgramClassSpec('idle', ((20e3, 0.40),)),
            ProgramClassSpec('busy', ((80e3, 0.40),)),
            ProgramClassSpec('sleep', ((150e3, 0.40), (40e3, 0.20))),
        ),
    )


def make_blobs(n_per_class=40, n_features=6, n_classes=3, spread=0.5, seed=0) -> Dataset:
    """클래스마다 떨어진 중심을 갖는 가우시안 군집"""
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=4.0, size=(n_classes, n_features))
    X = np.vstack([c + spread * rng.standard_normal((n_per_class, n_features)) for c in centers])
    y = np.repeat(np.arange(n_classes), n_per_class)
    return Dataset(X=X, y=y, class_table=tuple(f'c{i}' for i in range(n_classes)))


@pytest.fixture
def blobs():
    return make_blobs()


@pytest.fixture
def blobs_factory():
    return make_blobs
