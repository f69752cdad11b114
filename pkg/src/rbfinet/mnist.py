"""MNIST in IDX format, plus seeded minibatch iteration."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


class IDXFormatError(ValueError):
    """Malformed IDX file; ``field`` names the header field or section at fault."""

    def __init__(self, path, field: str, message: str):
        super().__init__(f"{path}: {field}: {message}")
        self.path = path
        self.field = field


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, 784) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64 in [0, 10)

    def __post_init__(self):
        if self.images.ndim != 2 or self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, limit: int | None) -> "Dataset":
        """The first ``limit`` examples (all of them when ``limit`` is None)."""
        if limit is None or limit >= len(self):
            return self
        return Dataset(self.images[:limit], self.labels[:limit])

    def permute_features(self, perm: np.ndarray) -> "Dataset":
        return Dataset(self.images[:, perm], self.labels)


def _read_header(path, blob: bytes, magic: int, ndim: int) -> tuple[int, ...]:
    size = 4 + 4 * ndim
    if len(blob) >= 4:
        (found,) = struct.unpack(">I", blob[:4])
        if found != magic:
            raise IDXFormatError(path, "magic", f"expected 0x{magic:08x}, found 0x{found:08x}")
    if len(blob) < size:
        raise IDXFormatError(path, "header", f"file has {len(blob)} bytes, header needs {size}")
    return struct.unpack(">" + "I" * ndim, blob[4:size])


def read_idx_images(path) -> np.ndarray:
    """Raw uint8 pixels, shape (count, rows * cols), rows flattened in order."""
    with open(path, "rb") as f:
        blob = f.read()
    count, rows, cols = _read_header(path, blob, IMAGE_MAGIC, 3)
    body = blob[16:]
    expected = count * rows * cols
    if len(body) != expected:
        raise IDXFormatError(path, "pixels", f"expected {expected} bytes for {count} images, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(count, rows * cols)


def read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    (count,) = _read_header(path, blob, LABEL_MAGIC, 1)
    body = blob[8:]
    if len(body) != count:
        raise IDXFormatError(path, "labels", f"expected {count} bytes, found {len(body)}")
    labels = np.frombuffer(body, dtype=np.uint8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise IDXFormatError(path, "labels", f"label {labels.max()} out of range [0, 10)")
    return labels


def load_idx(images_path, labels_path) -> Dataset:
    """Load an image/label file pair; pixels are divided by 255."""
    pixels = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if pixels.shape[0] != labels.shape[0]:
        raise IDXFormatError(labels_path, "count",
                             f"{labels.shape[0]} labels for {pixels.shape[0]} images")
    return Dataset(pixels.astype(np.float64) / 255.0, labels)


def load_mnist(directory, split: str = "train") -> Dataset:
    """Load the standard file pair for ``split`` ('train' or 'test') from ``directory``.

    Both the ``train-images-idx3-ubyte`` and ``train-images.idx3-ubyte``
    spellings are accepted.
    """
    names = {"train": TRAIN_FILES, "test": TEST_FILES}[split]
    paths = []
    for name in names:
        candidates = [os.path.join(directory, name), os.path.join(directory, name.replace("-idx", ".idx"))]
        found = next((p for p in candidates if os.path.exists(p)), None)
        if found is None:
            raise FileNotFoundError(f"none of {candidates} exists")
        paths.append(found)
    return load_idx(*paths)


def write_idx_images(path, pixels: np.ndarray, rows: int = 28, cols: int = 28) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(-1, rows * cols)
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, pixels.shape[0], rows, cols))
        f.write(pixels.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def batches(data: Dataset, batch_size: int, seed: int, epoch: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Shuffled minibatches for one epoch; the order depends only on (seed, epoch)."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    perm = epoch_permutation(len(data), seed, epoch)
    for start in range(0, len(data), batch_size):
        idx = perm[start:start + batch_size]
        yield data.images[idx], data.labels[idx]
