"""Tabular and image dataset loading.

Two sources are supported: CSV files with a header row (UCI-style tabular
data) and IDX image/label pairs (MNIST-style digit tasks, turned into
one-vs-rest binary problems).  Both produce the same in-memory
:class:`Dataset` of dense float64 features.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError
from .serialize import decode_array, encode_array, load_container, save_container

DATASET_CACHE_VERSION = 1

_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


class Task(Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


@dataclass(frozen=True)
class Dataset:
    """Dense numeric dataset: features, labels, names, task kind.

    Immutable after construction; all arrays are float64.  Classification
    labels are exactly 0.0/1.0.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    task: Task

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise DataError(
                f"labels length {labels.shape} does not match "
                f"{features.shape[0]} feature rows"
            )
        if len(self.feature_names) != features.shape[1]:
            raise DataError(
                f"{len(self.feature_names)} feature names for "
                f"{features.shape[1]} feature columns"
            )
        if features.size and not np.all(np.isfinite(features)):
            raise DataError("features contain NaN or Inf after loading")
        if labels.size and not np.all(np.isfinite(labels)):
            raise DataError("labels contain NaN or Inf")
        if self.task is Task.CLASSIFICATION and labels.size:
            if not np.all((labels == 0.0) | (labels == 1.0)):
                raise DataError("classification labels must be exactly 0.0 or 1.0")
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", list(self.feature_names))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic train/test split: fraction, seed, optional shuffle."""

    train_fraction: float
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise DataError(
                f"train_fraction must lie strictly in (0, 1), got {self.train_fraction}"
            )


def load_csv(path: str | Path, label_column: str, task: Task) -> Dataset:
    """Load a headered CSV into a Dataset.

    Missing cells (empty or NA-like tokens) are imputed with the column
    median of the non-missing values.  Any other non-numeric cell is a
    parse error naming the offending row and column.  The label column is
    removed from the features; remaining columns keep header order.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"{path}: label column not found: {label_column!r}")
        label_idx = header.index(label_column)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {line_no} has {len(row)} cells, expected {len(header)}"
                )
            rows.append((line_no, row))
    if not rows:
        raise DataError(f"{path}: no data rows")

    values = np.empty((len(rows), len(header)), dtype=np.float64)
    for i, (line_no, row) in enumerate(rows):
        for j, cell in enumerate(row):
            values[i, j] = _parse_cell(cell, path, line_no, header[j])

    # Impute per column; the label column must be fully observed.
    for j, name in enumerate(header):
        col = values[:, j]
        missing = np.isnan(col)
        if not missing.any():
            continue
        if j == label_idx:
            bad = rows[int(np.argmax(missing))][0]
            raise DataError(f"{path}: missing label value at row {bad}")
        if missing.all():
            raise DataError(f"{path}: column {name!r} has no observed values to impute from")
        col[missing] = np.median(col[~missing])

    feature_cols = [j for j in range(len(header)) if j != label_idx]
    features = values[:, feature_cols]
    labels = values[:, label_idx]
    names = [header[j] for j in feature_cols]
    return Dataset(features, labels, names, task)


def _parse_cell(cell: str, path: Path, line_no: int, column: str) -> float:
    text = cell.strip()
    if text.lower() in _MISSING_TOKENS:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise DataError(
            f"{path}: non-numeric cell {cell!r} at row {line_no}, column {column!r}"
        ) from None
    if math.isinf(value):
        raise DataError(
            f"{path}: non-finite value {cell!r} at row {line_no}, column {column!r}"
        )
    if math.isnan(value):
        return math.nan
    return value


def binarize_label(d: Dataset, threshold: float) -> Dataset:
    """Map labels to 1.0 where label >= threshold, else 0.0 (classification)."""
    labels = np.where(d.labels >= threshold, 1.0, 0.0)
    return Dataset(d.features.copy(), labels, d.feature_names, Task.CLASSIFICATION)


_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def load_idx_binary_digit(
    images_path: str | Path, labels_path: str | Path, digit: int
) -> Dataset:
    """Load an IDX image/label pair as a one-vs-rest digit classification task.

    Images are flattened row-major and scaled to [0, 1]; the label is 1.0
    exactly when the stored digit equals ``digit``.
    """
    if not 0 <= digit <= 9:
        raise DataError(f"digit must be in 0..9, got {digit}")
    images, rows, cols = _read_idx_images(Path(images_path))
    digits = _read_idx_labels(Path(labels_path))
    if images.shape[0] != digits.shape[0]:
        raise DataError(
            f"image/label count mismatch: {images.shape[0]} images, "
            f"{digits.shape[0]} labels"
        )
    features = images.reshape(images.shape[0], rows * cols).astype(np.float64) / 255.0
    labels = (digits == digit).astype(np.float64)
    names = [f"px{r}_{c}" for r in range(rows) for c in range(cols)]
    return Dataset(features, labels, names, Task.CLASSIFICATION)


def _read_idx_images(path: Path) -> tuple[np.ndarray, int, int]:
    if not path.exists():
        raise DataError(f"IDX images file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 16:
        raise DataError(f"{path}: truncated IDX image header")
    magic, count, rows, cols = struct.unpack(">iiii", blob[:16])
    if magic != _IDX_IMAGES_MAGIC:
        raise DataError(f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{_IDX_IMAGES_MAGIC:08x}")
    expected = 16 + count * rows * cols
    if len(blob) != expected:
        raise DataError(f"{path}: expected {expected} bytes for {count} images, found {len(blob)}")
    pixels = np.frombuffer(blob, dtype=np.uint8, offset=16).reshape(count, rows, cols)
    return pixels, rows, cols


def _read_idx_labels(path: Path) -> np.ndarray:
    if not path.exists():
        raise DataError(f"IDX labels file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 8:
        raise DataError(f"{path}: truncated IDX label header")
    magic, count = struct.unpack(">ii", blob[:8])
    if magic != _IDX_LABELS_MAGIC:
        raise DataError(f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{_IDX_LABELS_MAGIC:08x}")
    if len(blob) != 8 + count:
        raise DataError(f"{path}: expected {8 + count} bytes for {count} labels, found {len(blob)}")
    return np.frombuffer(blob, dtype=np.uint8, offset=8)


def write_idx_images(path: str | Path, images: np.ndarray) -> None:
    """Write a (n, rows, cols) uint8 array in IDX3 format."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with Path(path).open("wb") as handle:
        handle.write(struct.pack(">iiii", _IDX_IMAGES_MAGIC, n, rows, cols))
        handle.write(images.tobytes())


def write_idx_labels(path: str | Path, digits: np.ndarray) -> None:
    """Write a (n,) uint8 array in IDX1 format."""
    digits = np.ascontiguousarray(digits, dtype=np.uint8)
    with Path(path).open("wb") as handle:
        handle.write(struct.pack(">ii", _IDX_LABELS_MAGIC, digits.shape[0]))
        handle.write(digits.tobytes())


def split(d: Dataset, s: SplitSpec) -> tuple[Dataset, Dataset]:
    """Partition a dataset into train/test parts, deterministic for a seed."""
    n = d.n_samples
    if n < 2:
        raise DataError(f"need at least 2 samples to split, got {n}")
    if s.shuffle:
        order = np.random.default_rng(s.seed).permutation(n)
    else:
        order = np.arange(n)
    n_train = int(math.floor(s.train_fraction * n))
    train_idx, test_idx = order[:n_train], order[n_train:]
    return _take(d, train_idx), _take(d, test_idx)


def _take(d: Dataset, idx: np.ndarray) -> Dataset:
    return Dataset(d.features[idx], d.labels[idx], d.feature_names, d.task)


def save_dataset(path: str | Path, d: Dataset) -> None:
    """Cache a dataset to disk; reloading round-trips every float bit-exactly."""
    payload = {
        "features": encode_array(d.features),
        "labels": encode_array(d.labels),
        "feature_names": d.feature_names,
        "task": d.task.value,
    }
    save_container(path, "dataset", DATASET_CACHE_VERSION, payload)


def load_dataset(path: str | Path) -> Dataset:
    payload = load_container(path, "dataset", DATASET_CACHE_VERSION)
    return Dataset(
        decode_array(payload["features"]),
        decode_array(payload["labels"]),
        list(payload["feature_names"]),
        Task(payload["task"]),
    )
