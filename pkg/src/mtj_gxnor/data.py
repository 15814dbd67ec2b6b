"""IDX (MNIST) ingestion."""

from __future__ import annotations

import gzip
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagicError, CountMismatchError, DatasetError, TruncatedFileError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class Dataset:
    images: np.ndarray   # (n, rows, cols) uint8
    labels: np.ndarray   # (n,) uint8

    def __len__(self):
        return int(self.labels.shape[0])

    def normalized(self) -> np.ndarray:
        """Pixels mapped linearly from [0, 255] to [-1, 1], flattened per image."""
        return self.images.reshape(len(self), -1).astype(np.float64) / 127.5 - 1.0

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n])


def _read_bytes(path: Path) -> bytes:
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "rb") as fh:
                return fh.read()
        return path.read_bytes()
    except FileNotFoundError as exc:
        raise DatasetError(f"{path}: file not found") from exc
    except OSError as exc:
        raise DatasetError(f"{path}: {exc.strerror}") from exc


def _parse(path, magic: int, ndim: int) -> np.ndarray:
    path = Path(path)
    raw = _read_bytes(path)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(path, header, len(raw))
    got = int.from_bytes(raw[:4], "big")
    if got != magic:
        raise BadMagicError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = [int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim)]
    expected = header + int(np.prod(dims))
    if len(raw) < expected:
        raise TruncatedFileError(path, expected, len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=expected - header,
                         offset=header).reshape(dims)


def read_idx_images(path) -> np.ndarray:
    return _parse(path, IMAGE_MAGIC, 3)


def read_idx_labels(path) -> np.ndarray:
    return _parse(path, LABEL_MAGIC, 1)


def _locate(directory: Path, name: str) -> Path:
    for candidate in (directory / name, directory / (name + ".gz")):
        if candidate.exists():
            return candidate
    raise DatasetError(f"{directory}: missing {name}")


def load_mnist(path, split: str = "train") -> Dataset:
    """Load one split from a directory holding the four standard IDX files."""
    if split not in SPLIT_FILES:
        raise DatasetError(f"unknown split {split!r}")
    directory = Path(path)
    if not directory.is_dir():
        raise DatasetError(f"{directory}: dataset directory not found")
    img_name, lab_name = SPLIT_FILES[split]
    images = read_idx_images(_locate(directory, img_name))
    labels = read_idx_labels(_locate(directory, lab_name))
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{directory}: {images.shape[0]} images but {labels.shape[0]} labels")
    return Dataset(images, labels)


def default_mnist_dir() -> Path:
    return Path(os.environ.get("MNIST_DIR", "/root/data/mnist"))
