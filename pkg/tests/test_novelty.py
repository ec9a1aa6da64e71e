import numpy as np
import pytest

from emtriage.errors import DegenerateDataError, InsufficientDataError, InvalidArgumentError, ModelFormatError, ShapeError
from emtriage.models import FeatureConfig, MlpConfig, NoveltyConfig, ProgramClassSpec
from emtriage.utils import mlp, novelty
from emtriage.utils.corpus import trace_seed
from emtriage.utils.emitter import render_spec, synth_trace
from emtriage.utils.features import make_features

TAMPER_FEATURES = FeatureConfig(segment_s=0.002, n_buckets=20, reduction='max')


@pytest.fixture(scope='module')
def gaussian():
    return np.random.default_rng(7).standard_normal((200, 4))


@pytest.mark.parametrize('nu', [0.05, 0.1, 0.2])
def test_nu_bounds_training_outliers(gaussian, nu):
    model = novelty.fit(gaussian, NoveltyConfig(nu=nu))
    outliers = float(np.mean(novelty.score_batch(model, gaussian) < 0))

    assert outliers <= nu + 0.05
    assert model.dual_coef.sum() == pytest.approx(nu * gaussian.shape[0], rel=1e-9)
    assert np.all((model.dual_coef > 0) & (model.dual_coef <= 1.0))
    # support vector 비율 ≥ nu
    assert model.n_support >= int(nu * gaussian.shape[0])


def test_score_is_kernel_sum_minus_rho(gaussian):
    model = novelty.fit(gaussian, NoveltyConfig(nu=0.1))
    x = np.array([0.3, -1.2, 0.5, 2.0])
    z = (x - model.mean) / model.std
    k = np.exp(-model.gamma * np.sum((model.support_vectors - z) ** 2, axis=1))
    expected = float(k @ model.dual_coef - model.rho)
    assert novelty.score(model, x) == pytest.approx(expected, abs=1e-9)


def test_scale_gamma(gaussian):
    model = novelty.fit(gaussian, NoveltyConfig(nu=0.1, gamma='scale'))
    # 표준화 후 분산 1 → gamma = 1 / n_features
    assert model.gamma == pytest.approx(0.25)
    fixed = novelty.fit(gaussian, NoveltyConfig(nu=0.1, gamma=0.5))
    assert fixed.gamma == 0.5


def test_center_inside_far_point_outside(gaussian):
    model = novelty.fit(gaussian, NoveltyConfig(nu=0.1))
    assert novelty.score(model, gaussian.mean(axis=0)) > 0
    assert novelty.score(model, np.full(4, 50.0)) < 0


def test_fit_is_deterministic(gaussian):
    a = novelty.fit(gaussian, NoveltyConfig(nu=0.1, seed=3))
    b = novelty.fit(gaussian, NoveltyConfig(nu=0.1, seed=3))
    assert a.rho == b.rho
    assert np.array_equal(a.dual_coef, b.dual_coef)


def test_fit_rejects_bad_training_sets(gaussian):
    with pytest.raises(InsufficientDataError):
        novelty.fit(gaussian[:9], NoveltyConfig())
    with pytest.raises(DegenerateDataError):
        novelty.fit(np.ones((20, 4)), NoveltyConfig())
    with pytest.raises(InvalidArgumentError):
        novelty.fit(gaussian[0], NoveltyConfig())


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        NoveltyConfig(nu=0.0)
    with pytest.raises(InvalidArgumentError):
        NoveltyConfig(nu=1.5)
    with pytest.raises(InvalidArgumentError):
        NoveltyConfig(gamma='auto')
    with pytest.raises(InvalidArgumentError):
        NoveltyConfig(gamma=-1.0)


def test_score_dimension_mismatch(gaussian):
    model = novelty.fit(gaussian, NoveltyConfig())
    with pytest.raises(ShapeError):
        novelty.score(model, np.zeros(5))


def test_save_and_load(tmp_path, gaussian):
    model = novelty.fit(gaussian, NoveltyConfig(nu=0.2, seed=1))
    path = novelty.save_model(model, tmp_path / 'ocsvm.bin')
    loaded = novelty.load_model(path)

    assert loaded.rho == model.rho
    assert loaded.gamma == model.gamma
    assert loaded.n_train == 200
    assert loaded.config == model.config
    assert np.array_equal(novelty.score_batch(loaded, gaussian), novelty.score_batch(model, gaussian))


def test_load_rejects_mlp_model(tmp_path, blobs):
    path = mlp.save_model(mlp.train(blobs, MlpConfig(hidden_layers=(3,), epochs=2)), tmp_path / 'mlp.bin')
    with pytest.raises(ModelFormatError):
        novelty.load_model(path)


def test_detect_tampering_empty_input(gaussian):
    model = novelty.fit(gaussian, NoveltyConfig())
    summary = novelty.detect_tampering(model, [], TAMPER_FEATURES)
    assert summary.n_total == 0
    assert summary.fraction_flagged == 0.0
    assert novelty.summary_line(summary) == 'total=0 inliers=0 outliers=0 flagged=0.000'


def test_detect_tampering_flags_extra_tone(low_end):
    rate = 20e6
    legit = [synth_trace(low_end, 'prog0', 0.002, rate, trace_seed(0, 'prog0', i)) for i in range(50)]
    train, held_out = legit[:40], legit[40:]
    model = novelty.fit(
        [make_features(t, TAMPER_FEATURES).values for t in train],
        NoveltyConfig(nu=0.1),
    )

    base = low_end.get_class('prog0')
    modified = ProgramClassSpec('prog0-mod', base.envelope_tones + ((1.2e6, 0.2),))
    tampered = [render_spec(low_end, modified, 0.002, rate, trace_seed(0, 'prog0-mod', i)) for i in range(5)]

    flagged = novelty.detect_tampering(model, tampered, TAMPER_FEATURES, workers=2)
    assert flagged.n_outliers == 5
    assert [v.verdict for v in flagged.verdicts] == ['MODIFIED'] * 5
    assert flagged.verdicts[0].trace_id == 'prog0-mod#0000'

    inliers = novelty.detect_tampering(model, held_out, TAMPER_FEATURES)
    legit_scores = [v.score for v in inliers.verdicts]
    assert np.median(legit_scores) > max(v.score for v in flagged.verdicts)


def test_detect_tampering_trace_ids(low_end):
    trace = synth_trace(low_end, 'prog0', 0.002, 20e6, 1)
    model = novelty.fit(np.random.default_rng(0).standard_normal((20, 20)), NoveltyConfig())
    with pytest.raises(InvalidArgumentError):
        novelty.detect_tampering(model, [trace], TAMPER_FEATURES, trace_ids=['a', 'b'])
    summary = novelty.detect_tampering(model, [trace], TAMPER_FEATURES, trace_ids=['dev-01'])
    table = novelty.verdict_table(summary)
    assert table['trace_id'].tolist() == ['dev-01']
    assert list(table.columns) == ['trace_id', 'score', 'verdict']


def test_score_never_rises_moving_away_from_support_vectors(gaussian):
    model = novelty.fit(gaussian, NoveltyConfig(nu=0.1))
    rng = np.random.default_rng(21)
    steps = np.linspace(0.0, 8.0, 41)
    for _ in range(20):
        u = rng.standard_normal(model.feature_dim)
        u /= np.linalg.norm(u)
        # 시작점에서 (z0 - sv)·u ≥ 0 이면 모든 sv와의 거리가 t에 대해 증가
        z0 = u * float(np.max(model.support_vectors @ u))
        z = z0 + steps[:, None] * u
        scores = novelty.score_batch(model, z * model.std + model.mean)
        assert np.all(np.diff(scores) <= 1e-12)
