#!/usr/bin/env python
"""
emtriage - 명령행 실행 스크립트

    python run.py synth --class aes128 --out aes128.cf32
    python run.py exp-crypto --per-class 100
"""
import os
import sys

from emtriage import create_app
from emtriage.cli import main

# 환경 설정
config_name = os.environ.get('EMTRIAGE_ENV', 'development')
cfg = create_app(config_name)


if __name__ == '__main__':
    sys.exit(main(sys.argv[1:], cfg=cfg))
