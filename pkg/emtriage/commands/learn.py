"""
학습 verb: train / eval / crossval / novelty
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from emtriage.errors import InvalidArgumentError
from emtriage.models import NoveltyConfig
from emtriage.commands import (
    add_feature_args, add_mlp_args, add_results, add_seed, add_workers, feature_config_from_args,
    mlp_config_from_args, parse_gamma, results_dir,
)
from emtriage.utils import mlp, novelty
from emtriage.utils.corpus import iter_traces, load_manifest
from emtriage.utils.dataset_io import load_dataset
from emtriage.utils.metrics import (
    confusion_table, cross_validate, evaluate, format_crossval, format_report, metrics_table,
)
from emtriage.utils.results import write_csv, write_json

logger = logging.getLogger(__name__)


def cmd_train(args, cfg) -> int:
    dataset = load_dataset(args.dataset)
    config = mlp_config_from_args(args)
    model = mlp.train(dataset, config)
    path = mlp.save_model(model, args.model)

    report = evaluate(model, dataset)
    print(f'[DONE] model {path}: topology={model.topology}, classes={list(model.class_table)}')
    print(f'training accuracy={report.accuracy:.4f}')
    out = results_dir(args, cfg, 'train')
    write_csv(metrics_table(report), out, 'train_report')
    write_json({
        'verb': 'train', 'dataset': args.dataset, 'model': path, 'seed': args.seed,
        'topology': model.topology, 'learning_rate': config.learning_rate, 'epochs': config.epochs,
        'training_accuracy': report.accuracy,
    }, out, 'train')
    return 0


def cmd_eval(args, cfg) -> int:
    model = mlp.load_model(args.model)
    dataset = load_dataset(args.dataset)
    report = evaluate(model, dataset)
    print(format_report(report))
    out = results_dir(args, cfg, 'eval')
    write_csv(metrics_table(report), out, 'eval_report')
    write_csv(confusion_table(report), out, 'eval_confusion', index=True)
    write_json({
        'verb': 'eval', 'model': args.model, 'dataset': args.dataset, 'seed': args.seed,
        'accuracy': report.accuracy, 'macro_f1': report.macro_f1,
        'confusion_matrix': report.confusion_matrix,
    }, out, 'eval')
    return 0


def cmd_crossval(args, cfg) -> int:
    dataset = load_dataset(args.dataset)
    report = cross_validate(dataset, mlp_config_from_args(args), k=args.k, workers=args.workers)
    print(format_crossval(report))
    print()
    print(format_report(report.pooled))

    out = results_dir(args, cfg, 'crossval')
    folds = pd.DataFrame({
        'fold': np.arange(1, report.k + 1),
        'accuracy': report.fold_accuracies,
        'macro_f1': report.fold_f1,
    })
    write_csv(folds, out, 'crossval_folds')
    write_csv(metrics_table(report.pooled), out, 'crossval_report')
    write_json({
        'verb': 'crossval', 'dataset': args.dataset, 'seed': args.seed, 'k': report.k,
        'mean_accuracy': report.mean_accuracy, 'ci95_halfwidth': report.ci95_halfwidth,
        'mean_f1': report.mean_f1, 'ci95_f1_halfwidth': report.ci95_f1_halfwidth,
    }, out, 'crossval')
    return 0


def cmd_novelty(args, cfg) -> int:
    if not args.train_dataset and not args.check:
        raise InvalidArgumentError("--train-dataset 또는 --check 중 하나 이상이 필요합니다")
    out = results_dir(args, cfg, 'novelty')
    payload = {'verb': 'novelty', 'seed': args.seed}

    if args.train_dataset:
        dataset = load_dataset(args.train_dataset)
        X = dataset.X
        if args.label:
            if args.label not in dataset.class_table:
                raise InvalidArgumentError(f"데이터셋에 없는 라벨: {args.label!r} ({list(dataset.class_table)})")
            X = X[dataset.y == dataset.class_table.index(args.label)]
        config = NoveltyConfig(
            nu=args.nu, gamma=args.gamma, seed=args.seed, tol=cfg.SVM_TOL, max_iter=cfg.SVM_MAX_ITER,
        )
        model = novelty.fit(X, config)
        novelty.save_model(model, args.model)
        print(f'[DONE] novelty model {args.model}: sv={model.n_support}/{model.n_train}, gamma={model.gamma:.4g}')
        payload.update({'model': args.model, 'n_train': model.n_train, 'n_support': model.n_support,
                        'nu': config.nu, 'gamma': model.gamma})
    else:
        model = novelty.load_model(args.model)

    if args.check:
        manifest = load_manifest(args.check)
        labels = [c.strip() for c in args.labels.split(',')] if args.labels else None
        summary = novelty.detect_tampering(
            model, iter_traces(manifest, labels), feature_config_from_args(args), workers=args.workers,
        )
        table = novelty.verdict_table(summary)
        print(table.to_string(index=False, float_format=lambda v: f'{v:.4f}'))
        print(novelty.summary_line(summary))
        write_csv(table, out, 'novelty_verdicts')
        payload.update({'checked': summary.n_total, 'outliers': summary.n_outliers,
                        'fraction_flagged': summary.fraction_flagged})

    write_json(payload, out, 'novelty')
    return 0


def register(subparsers, cfg) -> None:
    p = subparsers.add_parser('train', help='MLP 분류기 학습')
    p.add_argument('--dataset', required=True, type=Path, help='features verb가 만든 데이터셋 경로')
    p.add_argument('--model', required=True, type=Path, help='저장할 모델 파일')
    add_mlp_args(p, cfg)
    add_seed(p, cfg)
    add_results(p, cfg, 'train')
    p.set_defaults(handler=cmd_train)

    p = subparsers.add_parser('eval', help='모델 평가 (precision/recall/F1 + 혼동 행렬)')
    p.add_argument('--model', required=True, type=Path)
    p.add_argument('--dataset', required=True, type=Path)
    add_seed(p, cfg)
    add_results(p, cfg, 'eval')
    p.set_defaults(handler=cmd_eval)

    p = subparsers.add_parser('crossval', help='stratified k-fold 교차 검증')
    p.add_argument('--dataset', required=True, type=Path)
    p.add_argument('--k', type=int, default=10)
    add_mlp_args(p, cfg)
    add_seed(p, cfg)
    add_workers(p, cfg)
    add_results(p, cfg, 'crossval')
    p.set_defaults(handler=cmd_crossval)

    p = subparsers.add_parser('novelty', help='one-class SVM 학습 / 변조 판정')
    p.add_argument('--train-dataset', type=Path, default=None, help='정상 펌웨어 특징 데이터셋')
    p.add_argument('--label', default=None, help='데이터셋 중 정상으로 쓸 라벨 (기본: 전체 행)')
    p.add_argument('--model', required=True, type=Path, help='저장/로드할 novelty 모델 파일')
    p.add_argument('--check', type=Path, default=None, help='판정할 코퍼스 루트')
    p.add_argument('--labels', default=None, help='판정할 라벨 (쉼표 구분, 기본: 전체)')
    p.add_argument('--nu', type=float, default=cfg.NOVELTY_NU)
    p.add_argument('--gamma', type=parse_gamma, default='scale', help="RBF gamma 또는 'scale'")
    add_feature_args(p, default_preset='programs')
    add_seed(p, cfg)
    add_workers(p, cfg)
    add_results(p, cfg, 'novelty')
    p.set_defaults(handler=cmd_novelty)
