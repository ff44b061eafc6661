"""Image-classification datasets for the trainer.

Two datasets are supported:

- ``digits``: scikit-learn's bundled 8x8 handwritten digits (1797
  samples), always available offline.
- ``mnist``: the classic 28x28 corpus, loaded from IDX files in a local
  data directory (``--data-dir`` or ``$CNNTRAINER_DATA``). Files are
  checksum-verified; when missing, a download is attempted from the
  usual mirrors and failure is reported cleanly (offline environments
  simply keep using ``digits``).

Splits are deterministic under the given seed, and the evaluation
(test) subset is disjoint from the training subset by construction.
"""

from __future__ import annotations

import gzip
import hashlib
import os
import struct
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATA_ENV_VAR = "CNNTRAINER_DATA"

# file name -> md5 of the gzip (the classic corpus's published values)
MNIST_FILES = {
    "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
    "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
    "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
}

MNIST_MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)


class DatasetError(RuntimeError):
    """Dataset unavailable or inconsistent."""


@dataclass(frozen=True)
class Split:
    """Arrays shaped (n, channels, height, width), labels int64."""

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    classes: int

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.train_x.shape[1:]


def load_dataset(name: str, train_n: int | None, test_n: int | None,
                 seed: int, data_dir: str | None = None) -> Split:
    if name == "digits":
        return _load_digits(train_n, test_n, seed)
    if name == "mnist":
        return _load_mnist(train_n, test_n, seed, data_dir)
    raise DatasetError(f"unknown dataset {name!r}; known: digits, mnist")


def _subset(x, y, train_n, test_n, seed, presplit=None):
    rng = np.random.default_rng(seed)
    if presplit is None:
        order = rng.permutation(len(x))
        train_n = train_n or int(0.7 * len(x))
        test_n = test_n or len(x) - train_n
        if train_n + test_n > len(x):
            raise DatasetError(
                f"requested {train_n}+{test_n} samples, dataset has {len(x)}"
            )
        train_idx = order[:train_n]
        test_idx = order[train_n:train_n + test_n]
        return x[train_idx], y[train_idx], x[test_idx], y[test_idx]
    x_test, y_test = presplit
    train_idx = rng.permutation(len(x))[: train_n or len(x)]
    test_idx = rng.permutation(len(x_test))[: test_n or len(x_test)]
    return x[train_idx], y[train_idx], x_test[test_idx], y_test[test_idx]


def _load_digits(train_n, test_n, seed) -> Split:
    from sklearn.datasets import load_digits

    raw, labels = load_digits(return_X_y=True)
    images = (raw.reshape(-1, 1, 8, 8) / 16.0).astype(np.float32)
    tx, ty, ex, ey = _subset(images, labels.astype(np.int64), train_n, test_n, seed)
    return Split(tx, ty, ex, ey, classes=10)


def data_directory(data_dir: str | None) -> Path:
    if data_dir:
        return Path(data_dir)
    return Path(os.environ.get(DATA_ENV_VAR, "data"))


def mnist_available(data_dir: str | None = None) -> bool:
    directory = data_directory(data_dir)
    return all((directory / name).exists() for name in MNIST_FILES)


def _fetch(directory: Path, name: str) -> Path:
    path = directory / name
    if not path.exists():
        directory.mkdir(parents=True, exist_ok=True)
        last = None
        for mirror in MNIST_MIRRORS:
            try:
                with urllib.request.urlopen(mirror + name, timeout=30) as response:
                    path.write_bytes(response.read())
                break
            except OSError as exc:
                last = exc
        else:
            raise DatasetError(
                f"MNIST file {name} is not in {directory} and no mirror is "
                f"reachable ({last}); place the IDX .gz files there manually"
            )
    digest = hashlib.md5(path.read_bytes()).hexdigest()
    expected = MNIST_FILES[name]
    if digest != expected:
        raise DatasetError(f"{path}: checksum {digest} != expected {expected}")
    return path


def _read_idx(path: Path) -> np.ndarray:
    with gzip.open(path, "rb") as fh:
        magic, = struct.unpack(">i", fh.read(4))
        if magic == 2051:
            n, rows, cols = struct.unpack(">iii", fh.read(12))
            data = np.frombuffer(fh.read(n * rows * cols), dtype=np.uint8)
            return data.reshape(n, rows, cols)
        if magic == 2049:
            n, = struct.unpack(">i", fh.read(4))
            return np.frombuffer(fh.read(n), dtype=np.uint8)
        raise DatasetError(f"{path}: unknown IDX magic {magic}")


def _load_mnist(train_n, test_n, seed, data_dir) -> Split:
    directory = data_directory(data_dir)
    files = {name: _fetch(directory, name) for name in MNIST_FILES}
    train_x = _read_idx(files["train-images-idx3-ubyte.gz"])
    train_y = _read_idx(files["train-labels-idx1-ubyte.gz"])
    test_x = _read_idx(files["t10k-images-idx3-ubyte.gz"])
    test_y = _read_idx(files["t10k-labels-idx1-ubyte.gz"])
    train_images = (train_x[:, None, :, :] / 255.0).astype(np.float32)
    test_images = (test_x[:, None, :, :] / 255.0).astype(np.float32)
    tx, ty, ex, ey = _subset(
        train_images, train_y.astype(np.int64), train_n, test_n, seed,
        presplit=(test_images, test_y.astype(np.int64)),
    )
    return Split(tx, ty, ex, ey, classes=10)
