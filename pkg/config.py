import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()


def _project_root() -> Path:
    # config.py 위치가 프로젝트 루트 (CWD 영향 제거를 위해 절대경로로 고정)
    return Path(__file__).resolve().parent


def _env_int(name: str, default: int, minimum: int = 1) -> int:
    """정수 환경변수 파싱. 빈 값/잘못된 값은 기본값, 최소값 미만은 최소값으로 보정."""
    raw = os.environ.get(name, str(default)) or str(default)
    try:
        value = int(raw)
    except ValueError:
        value = default
    return max(minimum, value)


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name, str(default)) or str(default)
    try:
        return float(raw)
    except ValueError:
        return default


def _env_path(name: str, default: Path) -> Path:
    raw = os.environ.get(name)
    if not raw:
        return default
    p = Path(raw)
    # 상대 경로는 프로젝트 루트 기준
    return p if p.is_absolute() else (_project_root() / p).resolve()


class Config:
    """Base configuration"""
    ENV_NAME = 'default'

    # 로그 / 결과 디렉토리
    LOG_DIR = _env_path('EMTRIAGE_LOG_DIR', _project_root() / 'logs')
    LOG_LEVEL = (os.environ.get('EMTRIAGE_LOG_LEVEL') or 'INFO').upper()
    RESULTS_DIR = _env_path('EMTRIAGE_RESULTS_DIR', _project_root() / 'results')
    PROFILES_DIR = _env_path('EMTRIAGE_PROFILES_DIR', _project_root() / 'profiles')

    # 재현성: 모든 verb의 기본 seed
    SEED = _env_int('EMTRIAGE_SEED', 1234, minimum=0)

    # 다운샘플링 anti-alias FIR 길이 (홀수여야 선형 위상 지연이 정수)
    _fir_taps = _env_int('EMTRIAGE_FIR_TAPS', 129, minimum=3)
    FIR_TAPS = _fir_taps if _fir_taps % 2 == 1 else _fir_taps + 1

    # 실시간 분석
    # - 200ms: Linux TCP 재전송 타임아웃 기본값을 처리 deadline으로 사용
    DEADLINE_MS = _env_float('EMTRIAGE_DEADLINE_MS', 200.0)
    QUEUE_DEPTH = _env_int('EMTRIAGE_QUEUE_DEPTH', 16)

    # 배치 특징 추출 / 코퍼스 생성 병렬도
    WORKERS = _env_int('EMTRIAGE_WORKERS', 4)

    # MLP 기본값
    MLP_LEARNING_RATE = _env_float('EMTRIAGE_MLP_LR', 0.01)
    MLP_EPOCHS = _env_int('EMTRIAGE_MLP_EPOCHS', 300)
    MLP_BATCH_SIZE = _env_int('EMTRIAGE_MLP_BATCH', 32)
    MLP_MOMENTUM = _env_float('EMTRIAGE_MLP_MOMENTUM', 0.9)

    # One-class SVM 기본값
    NOVELTY_NU = _env_float('EMTRIAGE_NOVELTY_NU', 0.1)
    SVM_TOL = _env_float('EMTRIAGE_SVM_TOL', 1e-6)
    SVM_MAX_ITER = _env_int('EMTRIAGE_SVM_MAX_ITER', 100_000)


class DevelopmentConfig(Config):
    """Development configuration"""
    ENV_NAME = 'development'
    LOG_LEVEL = (os.environ.get('EMTRIAGE_LOG_LEVEL') or 'DEBUG').upper()


class ProductionConfig(Config):
    """Production configuration"""
    ENV_NAME = 'production'


class TestingConfig(Config):
    """Testing configuration"""
    ENV_NAME = 'testing'
    WORKERS = 1
    MLP_EPOCHS = 200


config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config,
}
