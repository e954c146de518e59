import numpy as np
import pytest

from edgepool import LabeledDataset, datasets


def _as_dataset(images_u8, labels):
    flat = images_u8.reshape(len(images_u8), -1).astype(np.float32) / 255.0
    return LabeledDataset(flat, labels)


@pytest.fixture(scope="session")
def small_train():
    """2048-sample synthetic training set, enough for 32 APs x 2 shards."""
    return _as_dataset(*datasets.make_synthetic_digits(2048, seed=100))


@pytest.fixture(scope="session")
def small_test():
    return _as_dataset(*datasets.make_synthetic_digits(512, seed=101))


@pytest.fixture(scope="session")
def idx_dir(tmp_path_factory):
    """Small train/test IDX files on disk for config and CLI tests."""
    out = tmp_path_factory.mktemp("idx")
    paths = datasets.write_synthetic_digits(out, n_train=2048, n_test=512, seed=200)
    return {name: str(p) for name, p in paths.items()}
