"""
emtriage 명령행 진입점

    python run.py <verb> [options]

종료 코드: 0 성공 / 1 운영 오류 / 2 사용법 오류 / 3 검증(수용 기준) 실패
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from emtriage import __version__, create_app
from emtriage.commands import data, experiments, learn, stream
from emtriage.errors import EmTriageError

logger = logging.getLogger(__name__)

# verb 모듈 등록 순서 = --help 목록 순서
COMMAND_MODULES = (data, learn, stream, experiments)


def build_parser(cfg) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='emtriage',
        description='EM 사이드채널 기반 IoT 기기 활동 분류 / 변조 탐지 도구',
    )
    parser.add_argument('--version', action='version', version=f'emtriage {__version__}')
    subparsers = parser.add_subparsers(dest='verb', metavar='<verb>')
    subparsers.required = True
    for module in COMMAND_MODULES:
        module.register(subparsers, cfg)
    return parser


def main(argv: Optional[Sequence[str]] = None, cfg=None) -> int:
    if cfg is None:
        cfg = create_app(os.environ.get('EMTRIAGE_ENV', 'default'))
    parser = build_parser(cfg)

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse: --help/--version은 0, 인자 오류는 2
        return int(e.code or 0)

    logger.debug(f'verb={args.verb} args={vars(args)}')
    try:
        return int(args.handler(args, cfg) or 0)
    except EmTriageError as e:
        if e.exit_code == 1:
            logger.error(f'{args.verb} 실패: {e}')
        else:
            logger.debug(f'{args.verb} 종료 (code {e.exit_code}): {e}')
        print(f'[ERROR] {e}', file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(f'{args.verb} 파일/네트워크 오류: {e}')
        print(f'[ERROR] {e}', file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print('[ERROR] 중단됨', file=sys.stderr)
        return 1
    except Exception as e:
        logger.error(f'{args.verb} 예기치 않은 오류: {e}', exc_info=True)
        print(f'[ERROR] {e}', file=sys.stderr)
        return 1
