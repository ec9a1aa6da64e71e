"""
One-class SVM (RBF) 기반 펌웨어 변조 탐지

정상 펌웨어 특징만으로 경계를 학습하고, 경계 밖(score < 0)을 변조 의심으로 판정한다.

dual 문제:
    min 0.5 αᵀQα   s.t. 0 ≤ α_i ≤ 1,  Σα_i = ν·l,   Q_ij = exp(-γ‖x_i - x_j‖²)
결정 함수:
    f(x) = Σ α_i K(x_i, x) - ρ     (양수 = 정상)

SMO: 2차 정보 기반 working set 선택, 한 번에 두 변수만 갱신.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from emtriage.errors import (
    DegenerateDataError, InsufficientDataError, InvalidArgumentError, ModelFormatError, ShapeError, SolverError,
)
from emtriage.models import FeatureConfig, IQTrace, NoveltyConfig, NoveltyModel, TamperSummary, TamperVerdict
from emtriage.utils.binfmt import read_container, write_container
from emtriage.utils.features import make_features

logger = logging.getLogger(__name__)

MIN_TRAIN_ROWS = 10
MODEL_MAGIC = b'EMTOCSV\x00'
MODEL_VERSION = 1

_TAU = 1e-12


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * cdist(A, B, 'sqeuclidean'))


def _scale_gamma(X: np.ndarray) -> float:
    var = float(X.var())
    if not var > 0:
        raise DegenerateDataError("특징 분산이 0입니다 (모든 행이 동일)")
    return 1.0 / (X.shape[1] * var)


def _select_working_set(G: np.ndarray, alpha: np.ndarray, Q: np.ndarray, q_diag: np.ndarray) -> tuple[int, int, float]:
    """(i, j, gap). gap < tol 이면 수렴."""
    up = alpha < 1.0
    low = alpha > 0.0

    minus_g = np.where(up, -G, -np.inf)
    i = int(np.argmax(minus_g))
    g_max = float(minus_g[i])
    g_max2 = float(np.max(np.where(low, G, -np.inf)))
    gap = g_max + g_max2

    b = g_max + G
    cand = low & (b > 0)
    if not np.any(cand):
        return i, -1, gap
    a = q_diag[i] + q_diag - 2.0 * Q[i]
    a = np.where(a > 0, a, _TAU)
    obj = np.where(cand, -(b * b) / a, np.inf)
    j = int(np.argmin(obj))
    return i, j, gap


def _update_pair(alpha: np.ndarray, G: np.ndarray, Q: np.ndarray, i: int, j: int) -> tuple[float, float]:
    quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
    if quad <= 0:
        quad = _TAU
    old_i, old_j = alpha[i], alpha[j]
    total = old_i + old_j
    delta = (G[i] - G[j]) / quad
    ai, aj = old_i - delta, old_j + delta

    # 상자 제약 [0, 1] 안으로, 합은 유지
    if total > 1.0:
        if ai > 1.0:
            ai, aj = 1.0, total - 1.0
        if aj > 1.0:
            aj, ai = 1.0, total - 1.0
    else:
        if aj < 0.0:
            aj, ai = 0.0, total
        if ai < 0.0:
            ai, aj = 0.0, total

    alpha[i], alpha[j] = ai, aj
    return ai - old_i, aj - old_j


def _compute_rho(G: np.ndarray, alpha: np.ndarray) -> float:
    free = (alpha > 0.0) & (alpha < 1.0)
    if np.any(free):
        return float(np.mean(G[free]))
    at_upper = alpha >= 1.0
    lb = float(np.max(G[at_upper])) if np.any(at_upper) else -np.inf
    ub = float(np.min(G[~at_upper])) if np.any(~at_upper) else np.inf
    if math.isinf(lb):
        return ub
    if math.isinf(ub):
        return lb
    return (ub + lb) / 2.0


def solve_one_class(Q: np.ndarray, nu: float, tol: float, max_iter: int) -> tuple[np.ndarray, float, int]:
    """(alpha, rho, iterations)"""
    n = Q.shape[0]
    alpha = np.zeros(n)
    budget = nu * n
    n_full = min(int(budget), n)
    alpha[:n_full] = 1.0
    if n_full < n:
        alpha[n_full] = budget - n_full
    G = Q @ alpha
    q_diag = np.diag(Q).copy()

    gap = np.inf
    for it in range(1, max_iter + 1):
        i, j, gap = _select_working_set(G, alpha, Q, q_diag)
        if gap < tol or j < 0:
            return alpha, _compute_rho(G, alpha), it
        d_i, d_j = _update_pair(alpha, G, Q, i, j)
        G += Q[:, i] * d_i + Q[:, j] * d_j
    raise SolverError(max_iter, float(gap))


def fit(features: Union[np.ndarray, Sequence[np.ndarray]], config: NoveltyConfig) -> NoveltyModel:
    """정상 특징 벡터만으로 one-class 경계 학습"""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidArgumentError(f"특징 행렬은 2차원이어야 합니다: shape={X.shape}")
    if X.shape[0] < MIN_TRAIN_ROWS:
        raise InsufficientDataError(f"학습 행이 부족합니다: have={X.shape[0]}, need={MIN_TRAIN_ROWS}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("특징 행렬에 유한하지 않은 값이 있습니다")
    if np.all(np.ptp(X, axis=0) == 0):
        raise DegenerateDataError(f"모든 학습 행이 동일합니다 (rows={X.shape[0]})")

    # 표준화 통계는 정상 학습 데이터에서만 계산
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[~(std > 0)] = 1.0
    Z = (X - mean) / std
    gamma = _scale_gamma(Z) if config.gamma == 'scale' else float(config.gamma)

    # 초기 α가 입력 순서에 묶이지 않도록 seed로 행 순서를 섞는다
    order = np.random.default_rng(config.seed).permutation(Z.shape[0])
    Z = Z[order]

    Q = rbf_kernel(Z, Z, gamma)
    alpha, rho, iterations = solve_one_class(Q, config.nu, config.tol, config.max_iter)

    sv = alpha > 0.0
    model = NoveltyModel(
        support_vectors=Z[sv],
        dual_coef=alpha[sv],
        rho=rho,
        gamma=gamma,
        mean=mean,
        std=std,
        config=config,
        n_train=int(Z.shape[0]),
    )
    train_scores = (Q[:, sv] @ alpha[sv]) - rho
    outlier_fraction = float(np.mean(train_scores < 0))
    logger.info(
        f'one-class SVM 학습 완료: rows={Z.shape[0]}, sv={model.n_support}, nu={config.nu}, '
        f'gamma={gamma:.4g}, iterations={iterations}, train_outliers={outlier_fraction:.3f}'
    )
    return model


def _standardize(model: NoveltyModel, X: np.ndarray) -> np.ndarray:
    if X.shape[1] != model.feature_dim:
        raise ShapeError(model.feature_dim, X.shape[1])
    return (X - model.mean) / model.std


def score_batch(model: NoveltyModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    K = rbf_kernel(_standardize(model, X), model.support_vectors, model.gamma)
    return K @ model.dual_coef - model.rho


def score(model: NoveltyModel, features: np.ndarray) -> float:
    """결정값. 양수 = 정상(inlier)"""
    return float(score_batch(model, np.asarray(features, dtype=np.float64).reshape(1, -1))[0])


def _trace_id(trace: IQTrace, index: int) -> str:
    path = trace.extra.get('path') if trace.extra else None
    if path:
        return str(path)
    return f'{trace.label or "trace"}#{index:04d}'


def detect_tampering(
    model: NoveltyModel,
    traces: Iterable[IQTrace],
    feature_config: FeatureConfig,
    workers: int = 1,
    trace_ids: Optional[Sequence[str]] = None,
) -> TamperSummary:
    """make_features → score. score < 0 이면 MODIFIED"""
    traces = list(traces)
    ids = list(trace_ids) if trace_ids is not None else [_trace_id(t, i) for i, t in enumerate(traces)]
    if len(ids) != len(traces):
        raise InvalidArgumentError(f"trace_ids 길이 불일치: {len(ids)} != {len(traces)}")
    if not traces:
        return TamperSummary(verdicts=())

    def _one(trace: IQTrace) -> float:
        return score(model, make_features(trace, feature_config).values)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(_one, traces))
    else:
        scores = [_one(t) for t in traces]

    verdicts = tuple(TamperVerdict(trace_id=tid, score=s, is_outlier=s < 0.0) for tid, s in zip(ids, scores))
    summary = TamperSummary(verdicts=verdicts)
    logger.info(f'변조 판정: total={summary.n_total}, flagged={summary.n_outliers}')
    return summary


def verdict_table(summary: TamperSummary) -> pd.DataFrame:
    return pd.DataFrame(
        [{'trace_id': v.trace_id, 'score': v.score, 'verdict': v.verdict} for v in summary.verdicts],
        columns=['trace_id', 'score', 'verdict'],
    )


def summary_line(summary: TamperSummary) -> str:
    return (
        f'total={summary.n_total} inliers={summary.n_inliers} outliers={summary.n_outliers} '
        f'flagged={summary.fraction_flagged:.3f}'
    )


# ------------------------------------------------------------
# 모델 파일
# ------------------------------------------------------------

def save_model(model: NoveltyModel, path: Union[str, os.PathLike]):
    header = {
        'kind': 'one-class-svm',
        'rho': model.rho,
        'gamma': model.gamma,
        'n_train': model.n_train,
        'config': {
            'nu': model.config.nu,
            'gamma': model.config.gamma,
            'seed': model.config.seed,
            'tol': model.config.tol,
            'max_iter': model.config.max_iter,
        },
    }
    arrays = [model.mean, model.std, model.support_vectors, model.dual_coef]
    return write_container(path, MODEL_MAGIC, MODEL_VERSION, header, arrays)


def load_model(path: Union[str, os.PathLike]) -> NoveltyModel:
    header, arrays = read_container(path, MODEL_MAGIC, MODEL_VERSION)
    if len(arrays) != 4:
        raise ModelFormatError(f"모델 배열 개수 불일치: {path}")
    try:
        cfg = header['config']
        return NoveltyModel(
            support_vectors=arrays[2],
            dual_coef=arrays[3],
            rho=float(header['rho']),
            gamma=float(header['gamma']),
            mean=arrays[0],
            std=arrays[1],
            config=NoveltyConfig(
                nu=float(cfg['nu']),
                gamma=cfg['gamma'],
                seed=int(cfg['seed']),
                tol=float(cfg['tol']),
                max_iter=int(cfg['max_iter']),
            ),
            n_train=int(header['n_train']),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"모델 파일 내용 오류: {path}: {e}") from e
