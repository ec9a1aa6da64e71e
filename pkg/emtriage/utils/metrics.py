"""
분류 성능 평가 / k-fold 교차 검증 / 리포트 테이블
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support
from sklearn.model_selection import StratifiedKFold

from emtriage.errors import IncompatibleDatasetError, InsufficientSamplesError, InvalidArgumentError
from emtriage.models import ClassificationReport, CrossValReport, Dataset, MlpConfig, MlpModel
from emtriage.utils.mlp import predict_indices, train

logger = logging.getLogger(__name__)

CI95_Z = 1.96

# 리포트 표시용 클래스 이름
_DISPLAY_NAMES = {
    'other': 'Other',
    'aes256': 'AES-256',
    'aes128': 'AES-128',
    '3des': '3DES',
}


def display_name(class_name: str) -> str:
    """aes256 → AES-256, prog7 → 7"""
    if class_name in _DISPLAY_NAMES:
        return _DISPLAY_NAMES[class_name]
    if class_name.startswith('prog') and class_name[4:].isdigit():
        return class_name[4:]
    return class_name


def report_from_predictions(y_true: np.ndarray, y_pred: np.ndarray, class_table: Sequence[str]) -> ClassificationReport:
    labels = list(range(len(class_table)))
    cm = confusion_matrix(y_true, y_pred, labels=labels)
    precision, recall, f1, support = precision_recall_fscore_support(
        y_true, y_pred, labels=labels, zero_division=0
    )
    total = int(cm.sum())
    accuracy = float(np.trace(cm) / total) if total else 0.0
    return ClassificationReport(
        class_table=tuple(class_table),
        confusion_matrix=cm.astype(np.int64),
        precision=np.asarray(precision, dtype=np.float64),
        recall=np.asarray(recall, dtype=np.float64),
        f1=np.asarray(f1, dtype=np.float64),
        support=np.asarray(support, dtype=np.int64),
        accuracy=accuracy,
    )


def evaluate(model: MlpModel, dataset: Dataset) -> ClassificationReport:
    """모델을 데이터셋에 적용해 혼동 행렬 / precision / recall / f1 계산"""
    if tuple(dataset.class_table) != tuple(model.class_table):
        raise IncompatibleDatasetError(
            f"클래스 테이블 불일치: model={list(model.class_table)}, dataset={list(dataset.class_table)}"
        )
    if dataset.n_rows == 0:
        raise InvalidArgumentError("평가할 행이 없습니다")
    y_pred = predict_indices(model, dataset.X)
    return report_from_predictions(dataset.y, y_pred, model.class_table)


def ci95_halfwidth(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(CI95_Z * np.std(values, ddof=1) / math.sqrt(values.size))


def stratified_folds(dataset: Dataset, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train_index, test_index) 목록. 클래스별 행 수가 k 미만이면 예외."""
    if k < 2:
        raise InvalidArgumentError(f"k는 2 이상이어야 합니다: {k}")
    for name, count in dataset.class_counts().items():
        if count < k:
            raise InsufficientSamplesError(name, count, k)
    skf = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return list(skf.split(dataset.X, dataset.y))


def cross_validate(dataset: Dataset, config: MlpConfig, k: int = 10, workers: int = 1) -> CrossValReport:
    """stratified k-fold 교차 검증. fold는 병렬 학습 가능, 결과는 fold 순서로 병합."""
    folds = stratified_folds(dataset, k, config.seed)

    def _run(item):
        i, (train_idx, test_idx) = item
        model = train(dataset.subset(train_idx), config)
        y_pred = predict_indices(model, dataset.X[test_idx])
        report = report_from_predictions(dataset.y[test_idx], y_pred, dataset.class_table)
        logger.info(f'fold {i + 1}/{k}: accuracy={report.accuracy:.4f}, macro_f1={report.macro_f1:.4f}')
        return y_pred, report

    items = list(enumerate(folds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run, items))
    else:
        results = [_run(item) for item in items]

    accuracies = tuple(r.accuracy for _, r in results)
    f1s = tuple(r.macro_f1 for _, r in results)
    y_true_all = np.concatenate([dataset.y[test_idx] for _, test_idx in folds])
    y_pred_all = np.concatenate([pred for pred, _ in results])
    pooled = report_from_predictions(y_true_all, y_pred_all, dataset.class_table)

    report = CrossValReport(
        k=k,
        fold_accuracies=accuracies,
        mean_accuracy=float(np.mean(accuracies)),
        ci95_halfwidth=ci95_halfwidth(accuracies),
        fold_f1=f1s,
        mean_f1=float(np.mean(f1s)),
        ci95_f1_halfwidth=ci95_halfwidth(f1s),
        pooled=pooled,
    )
    logger.info(f'{k}-fold CV: mean_accuracy={report.mean_accuracy:.4f} ± {report.ci95_halfwidth:.4f}')
    return report


# ------------------------------------------------------------
# 리포트 테이블
# ------------------------------------------------------------

def metrics_table(report: ClassificationReport, class_order: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """클래스별 Precision / Recall / F1-Score / Support"""
    order = list(class_order) if class_order else list(report.class_table)
    index = {name: i for i, name in enumerate(report.class_table)}
    rows = []
    for name in order:
        i = index[name]
        rows.append({
            'Class': display_name(name),
            'Precision': float(report.precision[i]),
            'Recall': float(report.recall[i]),
            'F1-Score': float(report.f1[i]),
            'Support': int(report.support[i]),
        })
    return pd.DataFrame(rows, columns=['Class', 'Precision', 'Recall', 'F1-Score', 'Support'])


def confusion_table(report: ClassificationReport) -> pd.DataFrame:
    """행 = 실제, 열 = 예측"""
    names = [display_name(n) for n in report.class_table]
    return pd.DataFrame(
        report.confusion_matrix,
        index=pd.Index(names, name='true'),
        columns=pd.Index(names, name='pred'),
    )


def format_report(report: ClassificationReport, class_order: Optional[Sequence[str]] = None) -> str:
    table = metrics_table(report, class_order)
    lines = [
        table.to_string(index=False, float_format=lambda v: f'{v:.2f}'),
        '',
        'Confusion matrix (rows = true, cols = predicted)',
        confusion_table(report).to_string(),
        '',
        f'accuracy={report.accuracy:.4f}  macro_f1={report.macro_f1:.4f}  n={report.total}',
    ]
    return '\n'.join(lines)


def format_crossval(report: CrossValReport) -> str:
    folds = ' '.join(f'{a:.3f}' for a in report.fold_accuracies)
    return (
        f'{report.k}-fold CV accuracy = {report.mean_accuracy:.4f} ± {report.ci95_halfwidth:.4f} (95% CI)\n'
        f'macro F1 = {report.mean_f1:.4f} ± {report.ci95_f1_halfwidth:.4f}\n'
        f'folds: {folds}'
    )
