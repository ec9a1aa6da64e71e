"""
완전연결 MLP 분류기 (numpy)

- 은닉층: tanh (또는 sigmoid), 출력층: softmax + cross-entropy
- mini-batch 경사하강 + momentum, seed 고정 시 결정적
- 가중치 초기화: U(±sqrt(6 / (fan_in + fan_out)))
"""
from __future__ import annotations

import logging
import os
from typing import Sequence, Union

import numpy as np

from emtriage.errors import DivergenceError, InvalidDatasetError, ModelFormatError, ShapeError
from emtriage.models import Dataset, MlpConfig, MlpModel
from emtriage.utils.binfmt import read_container, write_container

logger = logging.getLogger(__name__)

MODEL_MAGIC = b'EMTMLP\x00\x00'
MODEL_VERSION = 1

Params = tuple[list[np.ndarray], list[np.ndarray]]


# ------------------------------------------------------------
# 수치 연산
# ------------------------------------------------------------

def _act(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == 'tanh':
        return np.tanh(z)
    return 0.5 * (1.0 + np.tanh(0.5 * z))  # 안정적인 sigmoid


def _act_grad(a: np.ndarray, activation: str) -> np.ndarray:
    # 출력값 a로 표현한 도함수
    if activation == 'tanh':
        return 1.0 - a * a
    return a * (1.0 - a)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def init_params(topology: Sequence[int], rng: np.random.Generator) -> Params:
    weights, biases = [], []
    for fan_in, fan_out in zip(topology[:-1], topology[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def forward(weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], X: np.ndarray, activation: str) -> list[np.ndarray]:
    """[입력, 은닉1, ..., softmax 출력]"""
    outs = [X]
    h = X
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = h @ W + b
        h = softmax(z) if i == last else _act(z, activation)
        outs.append(h)
    return outs


def loss_and_gradients(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    X: np.ndarray,
    Y: np.ndarray,
    activation: str = 'tanh',
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """평균 cross-entropy와 역전파 기울기. Y는 one-hot."""
    outs = forward(weights, biases, X, activation)
    probs = outs[-1]
    n = X.shape[0]
    loss = float(-np.sum(Y * np.log(np.clip(probs, 1e-300, None))) / n)

    grad_w = [np.empty_like(W) for W in weights]
    grad_b = [np.empty_like(b) for b in biases]
    delta = (probs - Y) / n
    for i in range(len(weights) - 1, -1, -1):
        grad_w[i] = outs[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * _act_grad(outs[i], activation)
    return loss, grad_w, grad_b


def _one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    Y = np.zeros((y.shape[0], n_classes))
    Y[np.arange(y.shape[0]), y] = 1.0
    return Y


def standardization_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # 분산 0인 특징은 std=1로 대체
    std[~(std > 0)] = 1.0
    return mean, std


# ------------------------------------------------------------
# 학습 / 추론
# ------------------------------------------------------------

def _check_trainable(dataset: Dataset) -> None:
    if dataset.n_classes < 2:
        raise InvalidDatasetError(f"학습에는 2개 이상의 클래스가 필요합니다: {list(dataset.class_table)}")
    empty = [name for name, c in dataset.class_counts().items() if c == 0]
    if empty:
        raise InvalidDatasetError(f"샘플이 없는 클래스가 있습니다: {', '.join(empty)}")
    if not np.all(np.isfinite(dataset.X)):
        raise InvalidDatasetError("특징 행렬에 유한하지 않은 값이 있습니다")


def train(dataset: Dataset, config: MlpConfig) -> MlpModel:
    """mini-batch 경사하강으로 MLP 학습"""
    _check_trainable(dataset)
    rng = np.random.default_rng(config.seed)

    if config.standardize:
        mean, std = standardization_stats(dataset.X)
    else:
        mean, std = np.zeros(dataset.feature_dim), np.ones(dataset.feature_dim)
    X = (dataset.X - mean) / std
    Y = _one_hot(dataset.y, dataset.n_classes)
    n = X.shape[0]

    topology = [dataset.feature_dim, *config.hidden_layers, dataset.n_classes]
    weights, biases = init_params(topology, rng)
    vel_w = [np.zeros_like(W) for W in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    lr, mu = config.learning_rate, config.momentum

    history: list[float] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, gw, gb = loss_and_gradients(weights, biases, X[idx], Y[idx], config.activation)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, lr)
            total += loss * idx.shape[0]
            for i in range(len(weights)):
                vel_w[i] = mu * vel_w[i] - lr * gw[i]
                vel_b[i] = mu * vel_b[i] - lr * gb[i]
                weights[i] += vel_w[i]
                biases[i] += vel_b[i]

        epoch_loss = total / n
        if not np.isfinite(epoch_loss) or not all(np.all(np.isfinite(W)) for W in weights):
            raise DivergenceError(epoch, lr)
        history.append(epoch_loss)
        if epoch % 50 == 0:
            logger.debug(f'MLP epoch {epoch}: loss={epoch_loss:.6f}')

        # 최근 patience epoch 동안 loss 변화가 delta 미만이면 조기 종료
        p = config.early_stop_patience
        if len(history) > p and abs(history[-1 - p] - history[-1]) < config.early_stop_delta:
            logger.debug(f'MLP 조기 종료: epoch={epoch}, loss={epoch_loss:.6f}')
            break

    logger.info(f'MLP 학습 완료: topology={topology}, epochs={len(history)}, loss={history[-1]:.6f}')
    return MlpModel(
        weights=tuple(weights),
        biases=tuple(biases),
        activation=config.activation,
        mean=mean,
        std=std,
        class_table=dataset.class_table,
    )


def predict_proba(model: MlpModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X.reshape(1, -1) if single else X
    if X2.shape[1] != model.input_dim:
        raise ShapeError(model.input_dim, X2.shape[1])
    probs = forward(model.weights, model.biases, (X2 - model.mean) / model.std, model.activation)[-1]
    return probs[0] if single else probs


def predict(model: MlpModel, features: np.ndarray) -> tuple[str, np.ndarray]:
    """(클래스 이름, softmax 점수). 동점이면 낮은 인덱스."""
    scores = predict_proba(model, np.asarray(features, dtype=np.float64).reshape(-1))
    return model.class_table[int(np.argmax(scores))], scores


def predict_indices(model: MlpModel, X: np.ndarray) -> np.ndarray:
    return np.argmax(predict_proba(model, X), axis=1)


# ------------------------------------------------------------
# 모델 파일
# ------------------------------------------------------------

def save_model(model: MlpModel, path: Union[str, os.PathLike]):
    header = {
        'kind': 'mlp',
        'topology': model.topology,
        'activation': model.activation,
        'class_table': list(model.class_table),
    }
    arrays = [model.mean, model.std]
    for W, b in zip(model.weights, model.biases):
        arrays.extend([W, b])
    return write_container(path, MODEL_MAGIC, MODEL_VERSION, header, arrays)


def load_model(path: Union[str, os.PathLike]) -> MlpModel:
    header, arrays = read_container(path, MODEL_MAGIC, MODEL_VERSION)
    try:
        topology = [int(d) for d in header['topology']]
        n_layers = len(topology) - 1
        if len(arrays) != 2 + 2 * n_layers:
            raise ModelFormatError(f"모델 배열 개수 불일치: {path}")
        return MlpModel(
            weights=tuple(arrays[2 + 2 * i] for i in range(n_layers)),
            biases=tuple(arrays[3 + 2 * i] for i in range(n_layers)),
            activation=str(header['activation']),
            mean=arrays[0],
            std=arrays[1],
            class_table=tuple(header['class_table']),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"모델 파일 내용 오류: {path}: {e}") from e
