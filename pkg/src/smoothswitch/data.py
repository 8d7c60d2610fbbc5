"""Datasets: seeded Gaussian-mixture generator, IDX loader, split and shard."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._seeding import make_rng
from .errors import ConfigError, DataError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
# class_sep=2.0 makes the 10-class, 20-dim task ~99% separable; 1.0 gives ~80%
DEFAULT_CLASS_SEP = 1.0


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise DataError(f"features must be a matrix, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise DataError(f"{labels.shape[0]} labels for {features.shape[0]} rows")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(features)):
            raise DataError("features contain NaN or Inf")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)


@dataclass(frozen=True)
class DatasetSplit:
    train: Dataset
    test: Dataset


def gen_synthetic(seed: int, n_samples: int = 10_000, input_dim: int = 20,
                  num_classes: int = 10, class_sep: float = DEFAULT_CLASS_SEP) -> Dataset:
    """Gaussian mixture with one unit-variance blob per class.

    Class means are drawn from ``U(-class_sep, class_sep)`` per dimension;
    labels are assigned round-robin so classes are balanced to within one
    sample.  Features are standardized per dimension over the whole set.
    """
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    if n_samples < num_classes:
        raise ConfigError(f"n_samples={n_samples} is smaller than num_classes={num_classes}")
    if input_dim < 1:
        raise ConfigError(f"input_dim must be >= 1, got {input_dim}")
    if class_sep < 0:
        raise ConfigError(f"class_sep must be non-negative, got {class_sep}")
    rng = make_rng(seed, 0xDA7A)
    means = rng.uniform(-class_sep, class_sep, size=(num_classes, input_dim))
    labels = np.arange(n_samples) % num_classes
    x = means[labels] + rng.standard_normal((n_samples, input_dim))
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    sigma[sigma == 0] = 1.0
    x = (x - mu) / sigma
    return Dataset(x, labels, num_classes)


def split(dataset: Dataset, train_fraction: float = 0.8, seed: int = 0) -> DatasetSplit:
    if not 0 < train_fraction < 1:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    n_train = int(np.floor(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise ConfigError(f"train_fraction={train_fraction} leaves one side of a {n}-row split empty")
    perm = make_rng(seed, 0x5B17).permutation(n)
    return DatasetSplit(dataset.take(perm[:n_train]), dataset.take(perm[n_train:]))


def shard(train: Dataset, worker_count: int) -> list[Dataset]:
    """Round-robin partition: worker ``w`` gets rows ``w, w+W, w+2W, ...``."""
    if worker_count < 1:
        raise ConfigError(f"worker_count must be >= 1, got {worker_count}")
    if worker_count > len(train):
        raise ConfigError(f"cannot split {len(train)} rows across {worker_count} workers")
    return [train.take(np.arange(w, len(train), worker_count)) for w in range(worker_count)]


def subsample(dataset: Dataset, n: int | None, seed: int) -> Dataset:
    if n is None or n >= len(dataset):
        return dataset
    idx = np.sort(make_rng(seed, 0x5AB5).choice(len(dataset), size=n, replace=False))
    return dataset.take(idx)


# IDX files: big-endian u32 magic (0x0000 08 <ndim>), ndim u32 sizes, raw u8 data.

def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as f:
            return f.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def _parse_idx(raw: bytes, expected_magic: int, path) -> np.ndarray:
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated before magic number", offset=len(raw))
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic != expected_magic:
        raise FormatError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0
        )
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated header", offset=len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    size = int(np.prod(dims, dtype=np.int64))
    if len(raw) < header_end + size:
        raise FormatError(
            f"{path}: truncated data, expected {size} bytes after header, found {len(raw) - header_end}",
            offset=len(raw),
        )
    if len(raw) > header_end + size:
        raise FormatError(f"{path}: trailing bytes after data", offset=header_end + size)
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header_end).reshape(dims)


def load_idx(images_path, labels_path, num_classes: int = 10) -> Dataset:
    """Load an IDX image/label pair; pixels scaled to [0, 1], images flattened."""
    images = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images.shape[0]} images in {images_path} but {labels.shape[0]} labels in {labels_path}",
            offset=4,
        )
    if labels.size and labels.max() >= num_classes:
        bad = int(np.argmax(labels >= num_classes))
        raise FormatError(f"{labels_path}: label {labels[bad]} out of range", offset=8 + bad)
    pixels = int(np.prod(images.shape[1:], dtype=np.int64))
    features = images.reshape(images.shape[0], pixels).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), num_classes)


def write_idx(path, array: np.ndarray):
    """Write a uint8 array in IDX layout (used for fixtures and round-trips)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">I", 0x0800 | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.tobytes())
