"""
CLI verb 패키지

각 모듈은 `register(subparsers, cfg)`로 자기 verb를 등록하고,
handler는 `(args, cfg) -> int` 형태로 종료 코드를 돌려준다.
"""
from __future__ import annotations

import argparse
import re
from pathlib import Path
from typing import Optional

from emtriage.errors import InvalidArgumentError
from emtriage.models import CRYPTO_FEATURES, PROGRAM_FEATURES, FeatureConfig, MlpConfig

FEATURE_PRESETS = {
    'crypto': CRYPTO_FEATURES,
    'programs': PROGRAM_FEATURES,
}

_RATE_RE = re.compile(r'^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([kKmMgG]?)(?:[hH][zZ])?\s*$')
_RATE_SCALE = {'': 1.0, 'k': 1e3, 'm': 1e6, 'g': 1e9}


def parse_rate(text: str) -> float:
    """'20e6', '20M', '500k', '4MHz' → Hz"""
    m = _RATE_RE.match(str(text))
    if not m:
        raise argparse.ArgumentTypeError(f"샘플레이트 형식 오류: {text!r}")
    value = float(m.group(1)) * _RATE_SCALE[m.group(2).lower()]
    if not value > 0:
        raise argparse.ArgumentTypeError(f"샘플레이트는 양수여야 합니다: {text!r}")
    return value


def parse_rate_list(text: str) -> list[float]:
    return [parse_rate(part) for part in text.split(',') if part.strip()]


def parse_layers(text: str) -> tuple[int, ...]:
    try:
        layers = tuple(int(p) for p in text.split(',') if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"은닉층은 '10,5' 형식이어야 합니다: {text!r}") from None
    if not layers or any(h < 1 for h in layers):
        raise argparse.ArgumentTypeError(f"은닉층 크기는 양의 정수여야 합니다: {text!r}")
    return layers


def add_seed(parser: argparse.ArgumentParser, cfg) -> None:
    parser.add_argument('--seed', type=int, default=cfg.SEED, help=f'난수 seed (기본: {cfg.SEED})')


def add_results(parser: argparse.ArgumentParser, cfg, verb: str) -> None:
    parser.add_argument(
        '--results', type=Path, default=None,
        help=f'결과 파일(CSV/JSON) 디렉토리 (기본: {cfg.RESULTS_DIR}/{verb})',
    )


def results_dir(args, cfg, verb: str) -> Path:
    return Path(args.results) if getattr(args, 'results', None) else Path(cfg.RESULTS_DIR) / verb


def add_workers(parser: argparse.ArgumentParser, cfg) -> None:
    parser.add_argument('--workers', type=int, default=cfg.WORKERS, help=f'병렬 작업 수 (기본: {cfg.WORKERS})')


def add_feature_args(parser: argparse.ArgumentParser, default_preset: Optional[str] = 'crypto') -> None:
    g = parser.add_argument_group('feature extraction')
    g.add_argument('--preset', choices=sorted(FEATURE_PRESETS), default=default_preset,
                   help='특징 설정 프리셋 (crypto: 500 mean, programs: 1000 max)')
    g.add_argument('--buckets', type=int, default=None, help='버킷 수 (프리셋 덮어쓰기)')
    g.add_argument('--reduction', choices=['mean', 'max'], default=None)
    g.add_argument('--segment-ms', type=float, default=None, help='FFT 구간 길이 (ms)')
    g.add_argument('--trim', choices=['middle_half', 'none'], default=None)
    g.add_argument('--window', choices=['none', 'hann'], default=None)


def feature_config_from_args(args) -> FeatureConfig:
    base = FEATURE_PRESETS[args.preset] if args.preset else FeatureConfig()
    return FeatureConfig(
        segment_s=base.segment_s if args.segment_ms is None else args.segment_ms / 1000.0,
        n_buckets=base.n_buckets if args.buckets is None else args.buckets,
        reduction=base.reduction if args.reduction is None else args.reduction,
        trim=base.trim if args.trim is None else args.trim,
        window=base.window if args.window is None else args.window,
    )


def add_mlp_args(parser: argparse.ArgumentParser, cfg, default_hidden: str = '10,5') -> None:
    g = parser.add_argument_group('MLP')
    g.add_argument('--hidden', type=parse_layers, default=parse_layers(default_hidden),
                   help=f'은닉층 노드 수 (기본: {default_hidden})')
    g.add_argument('--lr', type=float, default=cfg.MLP_LEARNING_RATE, help='learning rate')
    g.add_argument('--epochs', type=int, default=cfg.MLP_EPOCHS)
    g.add_argument('--batch', type=int, default=cfg.MLP_BATCH_SIZE)
    g.add_argument('--momentum', type=float, default=cfg.MLP_MOMENTUM)
    g.add_argument('--activation', choices=['tanh', 'sigmoid'], default='tanh')
    g.add_argument('--no-standardize', action='store_true', help='입력 표준화 끄기')


def mlp_config_from_args(args) -> MlpConfig:
    return MlpConfig(
        hidden_layers=args.hidden,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
        standardize=not args.no_standardize,
        momentum=args.momentum,
        activation=args.activation,
    )


def require_positive(value: float, name: str) -> float:
    if not value > 0:
        raise InvalidArgumentError(f"{name}는 양수여야 합니다: {value}")
    return value


def parse_gamma(text: str):
    """'scale' 또는 양수 float"""
    if text == 'scale':
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gamma는 양수 또는 'scale'이어야 합니다: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"gamma는 양수여야 합니다: {text!r}")
    return value
