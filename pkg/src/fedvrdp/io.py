"""On-disk formats: per-round metrics CSV and the binary model blob.

Model blob layout (all little-endian)::

    offset 0   4 bytes   magic b"FVRD"
    offset 4   uint32    format version (1)
    offset 8   uint64    d, number of parameters
    offset 16  d x float64 parameters
"""

from __future__ import annotations

import csv
import math
import struct
from pathlib import Path

import numpy as np

from .errors import IngestionError

METRICS_HEADER = (
    "round", "test_acc", "test_loss", "eps_theorem1",
    "lhs_var", "rhs_benign", "rhs_byz", "rhs_dp", "rhs_hetero",
    "wall_time_ms",
)
MODEL_MAGIC = b"FVRD"
MODEL_VERSION = 1
_HEADER = struct.Struct("<4sIQ")


def format_float(value) -> str:
    """Shortest round-trip representation; empty for missing values."""
    if value is None:
        return ""
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def metrics_row(metrics, record_wall_time: bool = False) -> list[str]:
    rhs = metrics.rhs_bound_terms or (None,) * 4
    wall = metrics.wall_time * 1000.0 if record_wall_time and metrics.wall_time is not None else None
    return [
        str(metrics.round),
        format_float(metrics.test_accuracy),
        format_float(metrics.test_loss),
        format_float(metrics.eps_theorem1),
        format_float(metrics.lhs_discrepancy),
        *(format_float(v) for v in rhs),
        format_float(wall),
    ]


class MetricsWriter:
    """Append-only CSV writer that flushes after every row."""

    def __init__(self, path, record_wall_time: bool = False):
        self.path = Path(path)
        self.record_wall_time = record_wall_time
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(METRICS_HEADER)
        self._fh.flush()

    def write(self, metrics) -> None:
        self._writer.writerow(metrics_row(metrics, self.record_wall_time))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def save_model(path, x: np.ndarray) -> None:
    x = np.ascontiguousarray(x, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, x.size))
        fh.write(x.tobytes())


def load_model(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise IngestionError("model blob shorter than its 16-byte header", offset=len(buf), source=path)
    magic, version, d = _HEADER.unpack_from(buf)
    if magic != MODEL_MAGIC:
        raise IngestionError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}", offset=0, source=path)
    if version != MODEL_VERSION:
        raise IngestionError(f"unsupported version {version}", offset=4, source=path)
    if len(buf) != _HEADER.size + 8 * d:
        raise IngestionError(
            f"expected {d} float64 values, payload has {len(buf) - _HEADER.size} bytes",
            offset=_HEADER.size, source=path,
        )
    return np.frombuffer(buf, dtype="<f8", offset=_HEADER.size).copy()
