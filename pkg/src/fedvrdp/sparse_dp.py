"""Top-k masking, L2 clipping and Gaussian perturbation of client updates.

A client's update passes through ``apply_mask -> clip -> perturb``; noise is
drawn only for the ``k`` coordinates in the round's mask, so everything off
the mask stays exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Mask:
    """Sorted, duplicate-free set of ``k`` coordinate indices out of ``d``."""

    indices: np.ndarray
    d: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ConfigurationError("mask indices must be 1-D")
        if idx.size < 1 or idx.size > self.d:
            raise ConfigurationError(f"mask must hold 1 <= k <= d={self.d} indices, got {idx.size}")
        if idx[0] < 0 or idx[-1] >= self.d or np.any(np.diff(idx) <= 0):
            raise ConfigurationError("mask indices must be sorted, unique and within [0, d)")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def k(self) -> int:
        return int(self.indices.size)

    @classmethod
    def full(cls, d: int) -> "Mask":
        return cls(np.arange(d), d)

    def to_dense(self) -> np.ndarray:
        """The 0/1 indicator vector of the mask."""
        out = np.zeros(self.d)
        out[self.indices] = 1.0
        return out

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.d == other.d and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash((self.d, self.indices.tobytes()))


@dataclass(frozen=True)
class DPConfig:
    """Clipping threshold ``clip`` (C), noise multiplier ``sigma`` and compression ratio ``p = k/d``.

    The default ``clip = inf`` disables clipping, which is only allowed with
    ``sigma == 0``.
    ``delta`` is the DP failure probability used for accounting.
    """

    clip: float = math.inf
    sigma: float = 0.0
    p: float = 1.0
    delta: float = 1e-5

    def __post_init__(self):
        if not self.clip > 0:
            raise ConfigurationError(f"must be > 0, got {self.clip}", "dp.clip")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ConfigurationError(f"must be finite and >= 0, got {self.sigma}", "dp.sigma")
        if self.sigma > 0 and math.isinf(self.clip):
            raise ConfigurationError("sigma > 0 requires a finite clipping threshold", "dp.clip")
        if not 0 < self.p <= 1:
            raise ConfigurationError(f"must lie in (0, 1], got {self.p}", "dp.p")
        if not 0 < self.delta < 1:
            raise ConfigurationError(f"must lie in (0, 1), got {self.delta}", "dp.delta")

    def k_for(self, d: int) -> int:
        return max(1, round(self.p * d))


@dataclass(frozen=True)
class SparseUpdate:
    """A client's submitted update: values on ``mask.indices``, zeros elsewhere."""

    mask: Mask
    values: np.ndarray
    client_id: int
    round: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.mask.k,):
            raise ConfigurationError(f"expected {self.mask.k} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("sparse update values must be finite")
        object.__setattr__(self, "values", values)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.mask.d)
        out[self.mask.indices] = self.values
        return out


def _check_k(k, d):
    if int(k) != k or not 1 <= k <= d:
        raise ConfigurationError(f"k must be an integer in [1, {d}], got {k}")


def top_k_sparsify(x: np.ndarray, k: int) -> Mask:
    """Indices of the ``k`` largest-magnitude coordinates; ties go to the lower index."""
    x = np.asarray(x, dtype=np.float64)
    _check_k(k, x.size)
    order = np.argsort(-np.abs(x), kind="stable")
    return Mask(np.sort(order[:k]), x.size)


def apply_mask(x: np.ndarray, m: Mask) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.d,):
        raise ConfigurationError(f"vector has shape {x.shape}, mask expects ({m.d},)")
    out = np.zeros_like(x)
    out[m.indices] = x[m.indices]
    return out


def clip(x: np.ndarray, c: float) -> np.ndarray:
    """Scale ``x`` down to L2 norm ``c`` if it is longer; otherwise return it unchanged."""
    if not c > 0:
        raise ConfigurationError(f"clipping threshold must be > 0, got {c}")
    x = np.asarray(x, dtype=np.float64)
    norm = float(np.linalg.norm(x))
    if norm <= c:
        return x.copy()
    return x * (c / norm)


def perturb(
    x_sparse: np.ndarray,
    mask: Mask,
    cfg: DPConfig,
    rng: np.random.Generator,
    client_id: int = -1,
    round: int = -1,
) -> SparseUpdate:
    """Add ``N(0, (C*sigma)^2)`` to each masked coordinate of an already clipped update.

    Exactly ``k`` normals are drawn, in mask order. With ``sigma == 0`` no
    draws are made and the values are returned unchanged.
    """
    x_sparse = np.asarray(x_sparse, dtype=np.float64)
    if x_sparse.shape != (mask.d,):
        raise ConfigurationError(f"vector has shape {x_sparse.shape}, mask expects ({mask.d},)")
    values = x_sparse[mask.indices].copy()
    if cfg.sigma > 0:
        values = values + cfg.clip * cfg.sigma * rng.standard_normal(mask.k)
    return SparseUpdate(mask, values, client_id, round)


def privatize(
    raw_update: np.ndarray,
    mask: Mask,
    cfg: DPConfig,
    rng: np.random.Generator,
    client_id: int = -1,
    round: int = -1,
) -> SparseUpdate:
    """Full client mechanism: mask, clip at ``cfg.clip``, then perturb."""
    clipped = clip(apply_mask(raw_update, mask), cfg.clip)
    return perturb(clipped, mask, cfg, rng, client_id, round)


def generate_mask(x_global: np.ndarray, k: int) -> Mask:
    """Server-side mask for the next round: top-k coordinates of the global model."""
    return top_k_sparsify(x_global, k)


def initial_mask(d: int, k: int, rng: np.random.Generator) -> Mask:
    """Uniformly random ``k``-subset of ``[0, d)``."""
    _check_k(k, d)
    return Mask(np.sort(rng.choice(d, size=k, replace=False)), d)
