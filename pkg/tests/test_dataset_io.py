import numpy as np
import pytest

from emtriage.errors import InvalidArgumentError, InvalidDatasetError
from emtriage.models import Dataset
from emtriage.utils.dataset_io import load_dataset, save_dataset


def test_save_and_load(tmp_path, blobs):
    hdr, bin_ = save_dataset(blobs, tmp_path / 'ds' / 'train')
    assert hdr.name == 'train.hdr'
    assert bin_.stat().st_size == blobs.n_rows * blobs.feature_dim * 8 + blobs.n_rows * 4

    loaded = load_dataset(tmp_path / 'ds' / 'train')
    assert loaded.class_table == blobs.class_table
    assert np.array_equal(loaded.X, blobs.X)
    assert np.array_equal(loaded.y, blobs.y)


def test_header_lists_classes(tmp_path, blobs):
    hdr, _ = save_dataset(blobs, tmp_path / 'd')
    text = hdr.read_text(encoding='utf-8')
    assert 'classes=c0,c1,c2' in text
    assert 'dtype=float64-le' in text


def test_truncated_binary(tmp_path, blobs):
    _, bin_ = save_dataset(blobs, tmp_path / 'd')
    bin_.write_bytes(bin_.read_bytes()[:-4])
    with pytest.raises(InvalidDatasetError):
        load_dataset(tmp_path / 'd')


def test_missing_files(tmp_path):
    with pytest.raises(InvalidDatasetError):
        load_dataset(tmp_path / 'nothing')


def test_class_names_with_commas_are_rejected(tmp_path):
    ds = Dataset(X=np.zeros((1, 2)), y=[0], class_table=('a,b',))
    with pytest.raises(InvalidDatasetError):
        save_dataset(ds, tmp_path / 'd')


def test_dataset_validation():
    with pytest.raises(InvalidArgumentError):
        Dataset(X=np.zeros((2, 3)), y=[0], class_table=('a',))
    with pytest.raises(InvalidArgumentError):
        Dataset(X=np.zeros((2, 3)), y=[0, 2], class_table=('a', 'b'))


def test_class_counts_and_subset(blobs):
    assert blobs.class_counts() == {'c0': 40, 'c1': 40, 'c2': 40}
    part = blobs.subset(np.array([0, 50, 100]))
    assert part.y.tolist() == [0, 1, 2]
    assert part.class_table == blobs.class_table
