import numpy as np
import pytest

from emtriage.errors import CorpusError, InsufficientSamplesError, InvalidArgumentError, UnknownClassError
from emtriage.models import CorpusManifest, ManifestEntry
from emtriage.utils.corpus import (
    build_corpus, iter_traces, load_manifest, relative_trace_path, resample_corpus, split, trace_seed,
    verify_corpus, write_manifest,
)
from emtriage.utils.emitter import synth_trace

RATE = 1e6


@pytest.fixture
def corpus(tmp_path, tiny_profile):
    return build_corpus(tiny_profile, per_class=4, duration_s=0.005, rate_hz=RATE, seed=11, root=tmp_path / 'c')


def _virtual(labels, per_label):
    return CorpusManifest(
        root='/nonexistent',
        entries=tuple(
            ManifestEntry(relative_trace_path(label, i), label, 20e6, 0.0, 0.01, i, 1_600_000)
            for label in labels
            for i in range(per_label)
        ),
    )


def test_build_writes_layout_and_manifest(corpus, tiny_profile):
    assert len(corpus) == 12
    assert corpus.labels == ['busy', 'idle', 'sleep']
    assert corpus.total_bytes == 12 * 5000 * 8
    assert (corpus.root / 'manifest.tsv').exists()
    assert (corpus.root / 'idle' / '0003.cf32').stat().st_size == 40000
    assert (corpus.root / 'idle' / '0003.cf32.meta').exists()
    first = corpus.root / 'manifest.tsv'
    assert first.read_text(encoding='utf-8').splitlines()[0] == '# emtriage-manifest v1'


def test_load_manifest_round_trip(corpus):
    loaded = load_manifest(corpus.root)
    assert loaded.entries == corpus.entries
    assert load_manifest(corpus.root / 'manifest.tsv').entries == corpus.entries


def test_traces_match_direct_synthesis(corpus, tiny_profile):
    traces = list(iter_traces(corpus, labels=['sleep']))
    assert [t.extra['path'] for t in traces] == [f'sleep/{i:04d}.cf32' for i in range(4)]
    direct = synth_trace(tiny_profile, 'sleep', 0.005, RATE, trace_seed(11, 'sleep', 2))
    assert np.array_equal(traces[2].samples, direct.samples)


def test_build_is_deterministic_across_roots(tmp_path, tiny_profile):
    a = build_corpus(tiny_profile, 2, 0.002, RATE, 3, tmp_path / 'a', workers=2)
    b = build_corpus(tiny_profile, 2, 0.002, RATE, 3, tmp_path / 'b')
    for ea, eb in zip(a.entries, b.entries):
        assert ea == eb
        assert (a.root / ea.path).read_bytes() == (b.root / eb.path).read_bytes()


def test_build_rejects_unknown_class(tmp_path, tiny_profile):
    with pytest.raises(UnknownClassError):
        build_corpus(tiny_profile, 2, 0.002, RATE, 0, tmp_path / 'x', classes=['idle', 'nope'])
    with pytest.raises(InvalidArgumentError):
        build_corpus(tiny_profile, 0, 0.002, RATE, 0, tmp_path / 'x')


def test_trace_seeds_are_distinct():
    seeds = {trace_seed(0, label, i) for label in ('prog0', 'prog1', 'aes128') for i in range(200)}
    assert len(seeds) == 600
    assert trace_seed(0, 'prog0', 5) == trace_seed(0, 'prog0', 5)
    assert trace_seed(1, 'prog0', 5) != trace_seed(0, 'prog0', 5)


def test_verify_clean_corpus(corpus):
    assert verify_corpus(load_manifest(corpus.root)) == []


def test_verify_reports_missing_and_resized(corpus):
    (corpus.root / 'busy' / '0001.cf32').unlink()
    resized = corpus.root / 'idle' / '0002.cf32'
    resized.write_bytes(resized.read_bytes()[:-8])

    problems = verify_corpus(load_manifest(corpus.root))
    assert len(problems) == 2
    assert any(p.startswith('busy/0001.cf32') for p in problems)
    assert any(p.startswith('idle/0002.cf32') for p in problems)


def test_verify_reports_label_mismatch(corpus):
    meta = corpus.root / 'idle' / '0000.cf32.meta'
    meta.write_text(meta.read_text(encoding='utf-8').replace('label=idle', 'label=busy'), encoding='utf-8')
    problems = verify_corpus(corpus)
    assert len(problems) == 1
    assert 'idle/0000.cf32' in problems[0]


def test_load_manifest_errors(tmp_path):
    with pytest.raises(CorpusError):
        load_manifest(tmp_path)
    bad = tmp_path / 'manifest.tsv'
    bad.write_text('path\tlabel\n', encoding='utf-8')
    with pytest.raises(CorpusError):
        load_manifest(tmp_path)
    bad.write_text('# emtriage-manifest v9\npath\tlabel\n', encoding='utf-8')
    with pytest.raises(CorpusError):
        load_manifest(tmp_path)


def test_write_manifest_keeps_missing_seed(tmp_path):
    manifest = CorpusManifest(tmp_path, (ManifestEntry('a/0000.cf32', 'a', 4e6, 0.0, 0.01, None, 320000),))
    write_manifest(manifest)
    assert load_manifest(tmp_path).entries[0].seed is None


def test_resample_corpus(corpus, tmp_path):
    out = resample_corpus(corpus, 0.5e6, tmp_path / 'half', workers=2)
    assert len(out) == len(corpus)
    assert out.total_bytes / corpus.total_bytes == pytest.approx(0.5)
    assert all(e.sample_rate_hz == 0.5e6 for e in out.entries)
    assert verify_corpus(load_manifest(tmp_path / 'half')) == []
    assert [e.label for e in out.entries] == [e.label for e in corpus.entries]


def test_resample_same_rate_copies(corpus, tmp_path):
    out = resample_corpus(corpus, RATE, tmp_path / 'copy')
    assert out.entries == corpus.entries
    assert (out.root / 'busy' / '0000.cf32').read_bytes() == (corpus.root / 'busy' / '0000.cf32').read_bytes()


def test_resample_rejects_upsampling_and_same_root(corpus, tmp_path):
    with pytest.raises(InvalidArgumentError):
        resample_corpus(corpus, 2e6, tmp_path / 'up')
    assert not (tmp_path / 'up').exists()
    with pytest.raises(InvalidArgumentError):
        resample_corpus(corpus, 0.5e6, corpus.root)


def test_split_is_stratified_and_deterministic():
    manifest = _virtual(['prog0', 'prog1'], 600)
    train, test = split(manifest, 500 / 600, seed=4)

    assert len(train) == 1000 and len(test) == 200
    assert {label: len(v) for label, v in train.by_label().items()} == {'prog0': 500, 'prog1': 500}
    assert not {e.path for e in train.entries} & {e.path for e in test.entries}
    assert {e.path for e in train.entries} | {e.path for e in test.entries} == {e.path for e in manifest.entries}

    again, _ = split(manifest, 500 / 600, seed=4)
    assert again.entries == train.entries
    other, _ = split(manifest, 500 / 600, seed=5)
    assert other.entries != train.entries


def test_split_errors():
    with pytest.raises(InsufficientSamplesError):
        split(_virtual(['a', 'b'], 1), 0.5, seed=0)
    with pytest.raises(InvalidArgumentError):
        split(_virtual(['a'], 10), 1.0, seed=0)
