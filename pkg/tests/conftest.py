import os

import numpy as np
import pytest

from shared.data import MNIST_FILES, write_idx


@pytest.fixture(autouse=True)
def no_webhooks(monkeypatch):
    for key in list(os.environ):
        if key.startswith("WEBHOOK_URL_"):
            monkeypatch.delenv(key)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def synthetic_mnist(tmp_path):
    """train 24개 / test 12개짜리 가짜 IDX 디렉토리"""
    gen = np.random.default_rng(7)
    data_dir = tmp_path / "mnist"
    data_dir.mkdir()
    for split, count in (("train", 24), ("test", 12)):
        images_name, labels_name = MNIST_FILES[split]
        write_idx(data_dir / images_name, gen.integers(0, 256, (count, 28, 28)))
        write_idx(data_dir / labels_name, gen.integers(0, 10, count))
    return data_dir
