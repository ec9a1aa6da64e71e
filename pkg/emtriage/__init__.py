import os
import logging
from logging.handlers import TimedRotatingFileHandler

from config import config

__version__ = '1.0.0'

_LOGGING_READY = False


def setup_logging(cfg):
    """로깅 설정"""
    global _LOGGING_READY
    if _LOGGING_READY:
        return

    # logs 폴더 생성
    logs_dir = str(cfg.LOG_DIR)
    os.makedirs(logs_dir, exist_ok=True)

    # 로그 포맷 설정 (날짜와 시간 포함)
    formatter = logging.Formatter(
        '[%(asctime)s] %(levelname)s in %(module)s: %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    level = getattr(logging, cfg.LOG_LEVEL, logging.INFO)

    # 날짜별 로그 파일 핸들러 (매일 자정에 새 파일 생성)
    file_handler = TimedRotatingFileHandler(
        os.path.join(logs_dir, 'emtriage.log'),
        when='midnight',
        interval=1,
        backupCount=30,  # 30일치 로그 보관
        encoding='utf-8'
    )
    file_handler.suffix = '%Y-%m-%d.log'
    file_handler.setFormatter(formatter)
    file_handler.setLevel(level)

    # 에러 로그 파일 핸들러 (에러만 별도 저장)
    error_file_handler = TimedRotatingFileHandler(
        os.path.join(logs_dir, 'emtriage-error.log'),
        when='midnight',
        interval=1,
        backupCount=90,  # 90일치 에러 로그 보관
        encoding='utf-8'
    )
    error_file_handler.suffix = '%Y-%m-%d.log'
    error_file_handler.setFormatter(formatter)
    error_file_handler.setLevel(logging.ERROR)

    # 콘솔 핸들러 (stdout은 결과 테이블 전용이므로 stderr로)
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    console_handler.setLevel(max(level, logging.INFO))

    pkg_logger = logging.getLogger('emtriage')
    pkg_logger.setLevel(level)
    pkg_logger.addHandler(file_handler)
    pkg_logger.addHandler(error_file_handler)
    pkg_logger.addHandler(console_handler)
    pkg_logger.propagate = False

    _LOGGING_READY = True


def create_app(config_name='default'):
    """Application factory pattern

    설정 클래스를 고르고, 로그/결과 디렉토리를 준비하고, 로깅을 설치한 뒤
    CLI가 사용할 설정 객체를 반환한다.
    """
    cfg = config.get(config_name, config['default'])()

    setup_logging(cfg)

    # 결과 폴더 (실험 verb의 기본 출력 위치)
    try:
        os.makedirs(cfg.RESULTS_DIR, exist_ok=True)
    except OSError:
        pass

    logger = logging.getLogger('emtriage')
    logger.debug('=' * 80)
    logger.debug('emtriage 시작')
    logger.debug(f'환경: {cfg.ENV_NAME}')
    logger.debug(f'기본 seed: {cfg.SEED}')
    logger.debug('=' * 80)
    return cfg
