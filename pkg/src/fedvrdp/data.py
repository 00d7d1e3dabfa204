"""Dataset sources (synthetic mixture, IDX files, CSV) and client partitioning."""

from __future__ import annotations

import csv
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IngestionError
from .model import Dataset
from .rng import Purpose, stream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


# -- synthetic ---------------------------------------------------------------

def synthetic(
    num_classes: int = 10,
    dim: int = 20,
    train_size: int = 10000,
    test_size: int = 2000,
    separation: float = 1.0,
    seed: int = 0,
) -> tuple[Dataset, Dataset]:
    """Gaussian-mixture classification data.

    Class centres are drawn once from ``N(0, separation^2 I)``; every point is
    its class centre plus standard normal noise. Labels cycle through the
    classes so both splits are balanced.
    """
    if num_classes < 2 or dim < 1 or train_size < 1 or test_size < 1:
        raise ConfigurationError("synthetic data needs num_classes >= 2, dim >= 1 and positive sizes")
    centres = separation * stream(seed, Purpose.DATA, 0).standard_normal((num_classes, dim))

    def draw(size, key):
        rng = stream(seed, Purpose.DATA, key)
        labels = rng.permutation(np.arange(size) % num_classes)
        return Dataset(centres[labels] + rng.standard_normal((size, dim)), labels, num_classes)

    return draw(train_size, 1), draw(test_size, 2)


# -- IDX ---------------------------------------------------------------------

def _read_header(buf: bytes, source, expected_magic: int, n_dims: int):
    header_len = 4 + 4 * n_dims
    if len(buf) < header_len:
        raise IngestionError(
            f"file too short for IDX header ({len(buf)} bytes, need {header_len})",
            offset=len(buf), source=source,
        )
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != expected_magic:
        raise IngestionError(
            f"bad magic number 0x{magic:08x}, expected 0x{expected_magic:08x}",
            offset=0, source=source,
        )
    return struct.unpack(">" + "I" * n_dims, buf[4:header_len]), header_len


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read file: {exc.strerror}", source=path) from None


def read_idx_images(path) -> np.ndarray:
    """Parse an IDX3 unsigned-byte image file into an ``(N, rows*cols)`` array in [0, 1]."""
    buf = _read_bytes(path)
    (count, rows, cols), offset = _read_header(buf, path, IDX_IMAGES_MAGIC, 3)
    need = offset + count * rows * cols
    if len(buf) != need:
        raise IngestionError(
            f"expected {count}x{rows}x{cols} pixels ({need} bytes total), file has {len(buf)} bytes",
            offset=min(len(buf), need), source=path,
        )
    pixels = np.frombuffer(buf, dtype=np.uint8, offset=offset).reshape(count, rows * cols)
    return pixels.astype(np.float64) / 255.0


def read_idx_labels(path) -> np.ndarray:
    buf = _read_bytes(path)
    (count,), offset = _read_header(buf, path, IDX_LABELS_MAGIC, 1)
    if len(buf) != offset + count:
        raise IngestionError(
            f"expected {count} labels ({offset + count} bytes total), file has {len(buf)} bytes",
            offset=min(len(buf), offset + count), source=path,
        )
    return np.frombuffer(buf, dtype=np.uint8, offset=offset).astype(np.int64)


def load_idx(images_path, labels_path, num_classes: int | None = None) -> Dataset:
    features = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if features.shape[0] != labels.shape[0]:
        raise IngestionError(
            f"{features.shape[0]} images but {labels.shape[0]} labels", offset=4, source=labels_path
        )
    if labels.size == 0:
        raise IngestionError("empty IDX file", offset=8, source=images_path)
    num_classes = num_classes or int(labels.max()) + 1
    bad = np.flatnonzero(labels >= num_classes)
    if bad.size:
        raise IngestionError(
            f"label {labels[bad[0]]} at index {bad[0]} outside [0, {num_classes})",
            offset=8 + int(bad[0]), source=labels_path,
        )
    return Dataset(features, labels, num_classes)


# -- CSV ---------------------------------------------------------------------

def load_csv(path, label_column: str = "label", num_classes: int | None = None) -> Dataset:
    """Numeric feature columns plus one integer label column; the first row is a header."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read file: {exc.strerror}", source=path) from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("empty CSV file", offset=0, source=path) from None
        if label_column not in header:
            raise IngestionError(f"label column {label_column!r} not in header {header}", source=path)
        label_idx = header.index(label_column)
        features, labels = [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestionError(f"row {row_no}: expected {len(header)} cells, got {len(row)}", source=path)
            values = []
            for col_no, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    raise IngestionError(
                        f"row {row_no}, column {col_no + 1} ({header[col_no]!r}): non-numeric value {cell!r}",
                        source=path,
                    ) from None
                if not math.isfinite(value):
                    raise IngestionError(f"row {row_no}, column {col_no + 1}: non-finite value", source=path)
                values.append(value)
            label = values.pop(label_idx)
            if label != int(label) or label < 0:
                raise IngestionError(f"row {row_no}: label {label} is not a non-negative integer", source=path)
            features.append(values)
            labels.append(int(label))
    if not labels:
        raise IngestionError("CSV file has no data rows", source=path)
    labels = np.array(labels, dtype=np.int64)
    num_classes = num_classes or int(labels.max()) + 1
    if labels.max() >= num_classes:
        raise IngestionError(f"label {labels.max()} outside [0, {num_classes})", source=path)
    return Dataset(np.array(features, dtype=np.float64), labels, num_classes)


def holdout_split(data: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0 < test_fraction < 1:
        raise ConfigurationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    order = stream(seed, Purpose.DATA, 3).permutation(len(data))
    n_test = max(1, int(round(test_fraction * len(data))))
    if n_test >= len(data):
        raise ConfigurationError("dataset too small for a holdout split")
    return data.subset(np.sort(order[n_test:])), data.subset(np.sort(order[:n_test]))


# -- partitioning ------------------------------------------------------------

def partition_data(dataset: Dataset, n: int, scheme: str = "iid", seed: int = 0, alpha: float = 1.0) -> list[Dataset]:
    """Split ``dataset`` into ``n`` equal-size client shards (``len // n`` points each).

    ``iid`` shuffles and slices. ``dirichlet`` draws each client's label
    proportions from ``Dir(alpha)`` and fills its shard by sampling labels from
    those proportions without replacement from the remaining pool; when a
    class runs out the proportions are renormalised over what is left.
    """
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    if len(dataset) < n:
        raise ConfigurationError(f"dataset has {len(dataset)} points, fewer than n={n} clients")
    size = len(dataset) // n
    rng = stream(seed, Purpose.PARTITION)
    if scheme == "iid":
        order = rng.permutation(len(dataset))
        return [dataset.subset(order[i * size : (i + 1) * size]) for i in range(n)]
    if scheme != "dirichlet":
        raise ConfigurationError(f"unknown partition scheme {scheme!r}")
    if not alpha > 0:
        raise ConfigurationError(f"dirichlet alpha must be > 0, got {alpha}")

    c = dataset.num_classes
    pools = [list(rng.permutation(np.flatnonzero(dataset.labels == k))) for k in range(c)]
    shards = []
    for _ in range(n):
        props = rng.dirichlet(np.full(c, alpha))
        chosen = []
        for _ in range(size):
            avail = np.array([len(p) > 0 for p in pools], dtype=np.float64)
            weights = props * avail
            total = weights.sum()
            # dirichlet mass may sit entirely on exhausted classes
            weights = weights / total if total > 0 else avail / avail.sum()
            k = int(rng.choice(c, p=weights))
            chosen.append(pools[k].pop())
        shards.append(dataset.subset(np.sort(chosen)))
    return shards


def label_distribution(shard: Dataset) -> np.ndarray:
    return np.bincount(shard.labels, minlength=shard.num_classes) / len(shard)
