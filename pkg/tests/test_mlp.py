import numpy as np
import pytest

from emtriage.errors import InvalidArgumentError, InvalidDatasetError, ModelFormatError, ShapeError
from emtriage.models import Dataset, MlpConfig
from emtriage.utils import mlp
from emtriage.utils.binfmt import write_container
from emtriage.utils.metrics import evaluate


def _numeric_gradients(weights, biases, X, Y, activation, eps=1e-6):
    def loss():
        return mlp.loss_and_gradients(weights, biases, X, Y, activation)[0]

    grads = []
    for p in [*weights, *biases]:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=['multi_index'])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + eps
            up = loss()
            p[idx] = old - eps
            down = loss()
            p[idx] = old
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


@pytest.mark.parametrize('activation', ['tanh', 'sigmoid'])
def test_gradients_match_finite_differences(activation):
    rng = np.random.default_rng(0)
    worst = 0.0
    for case in range(50):
        n_in, n_out = rng.integers(2, 5), rng.integers(2, 4)
        hidden = tuple(int(h) for h in rng.integers(2, 5, size=rng.integers(1, 3)))
        weights, biases = mlp.init_params([n_in, *hidden, n_out], rng)
        biases = [rng.normal(scale=0.1, size=b.shape) for b in biases]
        X = rng.standard_normal((6, n_in))
        Y = np.eye(n_out)[rng.integers(0, n_out, size=6)]

        _, gw, gb = mlp.loss_and_gradients(weights, biases, X, Y, activation)
        analytic = np.concatenate([g.ravel() for g in [*gw, *gb]])
        numeric = np.concatenate([g.ravel() for g in _numeric_gradients(weights, biases, X, Y, activation)])
        rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
        worst = max(worst, rel)
    assert worst < 1e-4


def test_softmax_is_stable():
    p = mlp.softmax(np.array([[1000.0, 1000.0, -1000.0], [0.0, 1.0, 2.0]]))
    assert np.all(np.isfinite(p))
    assert np.allclose(p.sum(axis=1), 1.0)
    assert p[0, 0] == pytest.approx(0.5)


def test_init_params_glorot_bounds():
    weights, biases = mlp.init_params([500, 10, 5, 4], np.random.default_rng(0))
    assert [w.shape for w in weights] == [(500, 10), (10, 5), (5, 4)]
    assert np.abs(weights[0]).max() <= np.sqrt(6.0 / 510)
    assert all(np.all(b == 0) for b in biases)


def test_train_separates_blobs(blobs):
    model = mlp.train(blobs, MlpConfig(hidden_layers=(8,), epochs=100, seed=1))
    assert model.topology == [6, 8, 3]
    assert evaluate(model, blobs).accuracy >= 0.95


def test_train_is_deterministic(blobs):
    config = MlpConfig(hidden_layers=(5, 3), epochs=20, seed=4)
    a = mlp.train(blobs, config)
    b = mlp.train(blobs, config)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)


def test_sigmoid_without_momentum_or_standardization(blobs):
    config = MlpConfig(hidden_layers=(8,), epochs=300, learning_rate=0.5, momentum=0.0,
                       activation='sigmoid', standardize=False, seed=0)
    model = mlp.train(blobs, config)
    assert np.all(model.mean == 0) and np.all(model.std == 1)
    assert evaluate(model, blobs).accuracy >= 0.9


def test_predict_returns_name_and_scores(blobs):
    model = mlp.train(blobs, MlpConfig(hidden_layers=(8,), epochs=100, seed=1))
    name, scores = mlp.predict(model, blobs.X[0])
    assert name == 'c0'
    assert scores.shape == (3,)
    assert scores.sum() == pytest.approx(1.0)


def test_predict_dimension_mismatch(blobs):
    model = mlp.train(blobs, MlpConfig(hidden_layers=(4,), epochs=5, seed=1))
    with pytest.raises(ShapeError):
        mlp.predict(model, np.zeros(7))


def test_constant_feature_is_harmless(blobs_factory):
    ds = blobs_factory()
    X = np.hstack([ds.X, np.full((ds.n_rows, 1), 3.0)])
    model = mlp.train(Dataset(X, ds.y, ds.class_table), MlpConfig(hidden_layers=(8,), epochs=50, seed=0))
    assert model.std[-1] == 1.0
    assert np.all(np.isfinite(mlp.predict_proba(model, X)))


def test_untrainable_datasets():
    X = np.random.default_rng(0).standard_normal((10, 3))
    with pytest.raises(InvalidDatasetError):
        mlp.train(Dataset(X, np.zeros(10), ('only',)), MlpConfig())
    with pytest.raises(InvalidDatasetError):
        mlp.train(Dataset(X, np.zeros(10), ('a', 'b')), MlpConfig())
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(InvalidDatasetError):
        mlp.train(Dataset(bad, np.arange(10) % 2, ('a', 'b')), MlpConfig())


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        MlpConfig(hidden_layers=())
    with pytest.raises(InvalidArgumentError):
        MlpConfig(learning_rate=0)
    with pytest.raises(InvalidArgumentError):
        MlpConfig(momentum=1.0)
    with pytest.raises(InvalidArgumentError):
        MlpConfig(activation='relu')


def test_save_and_load_model(tmp_path, blobs):
    model = mlp.train(blobs, MlpConfig(hidden_layers=(6, 4), epochs=30, seed=2))
    path = mlp.save_model(model, tmp_path / 'm' / 'model.bin')
    loaded = mlp.load_model(path)
    assert loaded.topology == model.topology
    assert loaded.class_table == model.class_table
    assert np.array_equal(mlp.predict_proba(loaded, blobs.X), mlp.predict_proba(model, blobs.X))


def test_load_rejects_truncated_and_foreign_files(tmp_path, blobs):
    model = mlp.train(blobs, MlpConfig(hidden_layers=(4,), epochs=5, seed=2))
    path = mlp.save_model(model, tmp_path / 'model.bin')
    raw = path.read_bytes()

    cut = tmp_path / 'cut.bin'
    cut.write_bytes(raw[:-8])
    with pytest.raises(ModelFormatError):
        mlp.load_model(cut)

    foreign = tmp_path / 'foreign.bin'
    foreign.write_bytes(b'NOTAMODL' + raw[8:])
    with pytest.raises(ModelFormatError):
        mlp.load_model(foreign)

    with pytest.raises(ModelFormatError):
        mlp.load_model(tmp_path / 'missing.bin')


@pytest.mark.parametrize('factor', [8.0, 1e3, 1e-3])
def test_standardized_training_ignores_feature_scale(blobs, factor):
    config = MlpConfig(hidden_layers=(8,), epochs=100, seed=2)
    scaled = Dataset(X=blobs.X * factor, y=blobs.y, class_table=blobs.class_table)
    base = mlp.train(blobs, config)
    rescaled = mlp.train(scaled, config)
    assert np.array_equal(mlp.predict_indices(base, blobs.X), mlp.predict_indices(rescaled, scaled.X))


def test_load_rejects_unknown_activation(tmp_path, blobs):
    model = mlp.train(blobs, MlpConfig(hidden_layers=(4,), epochs=5, seed=1))
    path = tmp_path / 'relu.bin'
    header = {'kind': 'mlp', 'topology': model.topology, 'activation': 'relu',
              'class_table': list(model.class_table)}
    arrays = [model.mean, model.std]
    for W, b in zip(model.weights, model.biases):
        arrays.extend([W, b])
    write_container(path, mlp.MODEL_MAGIC, mlp.MODEL_VERSION, header, arrays)
    with pytest.raises(ModelFormatError):
        mlp.load_model(path)
