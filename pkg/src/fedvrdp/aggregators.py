"""Server-side aggregation rules over dense client updates.

Every rule takes a sequence of equal-length vectors (or an ``(s, d)`` array)
and returns one vector of length ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ProtocolError

RULES = ("mean", "trimmed_mean", "median", "krum", "bulyan")


@dataclass(frozen=True)
class AggregatorConfig:
    rule: str = "mean"
    f: int = 0

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigurationError(f"unknown rule {self.rule!r}; expected one of {RULES}", "aggregator.rule")
        if int(self.f) != self.f or self.f < 0:
            raise ConfigurationError(f"must be a non-negative integer, got {self.f}", "aggregator.f")


def admissibility_error(rule: str, s: int, f: int) -> str | None:
    """Reason why ``rule`` cannot tolerate ``f`` Byzantine updates out of ``s``, or None."""
    if rule == "trimmed_mean" and not s > 2 * f:
        return f"trimmed_mean needs s > 2f (s={s}, f={f})"
    if rule == "krum" and not s > 2 * f + 2:
        return f"krum needs s > 2f + 2 (s={s}, f={f})"
    if rule == "bulyan" and not s >= 4 * f + 3:
        return f"bulyan needs s >= 4f + 3 (s={s}, f={f})"
    return None


def _stack(updates) -> np.ndarray:
    if len(updates) == 0:
        raise ProtocolError("no updates to aggregate")
    try:
        arr = np.asarray(updates, dtype=np.float64)
    except ValueError:
        raise ProtocolError("updates must share one dimension") from None
    if arr.ndim != 2:
        raise ProtocolError(f"updates must share one dimension; got array of shape {arr.shape}")
    return arr


def mean(updates) -> np.ndarray:
    arr = _stack(updates)
    return arr.sum(axis=0) / arr.shape[0]


def trimmed_mean(updates, f: int) -> np.ndarray:
    """Per coordinate, drop the ``f`` largest and ``f`` smallest values and average the rest."""
    arr = _stack(updates)
    s = arr.shape[0]
    if not s > 2 * f:
        raise ConfigurationError(f"trimmed_mean needs s > 2f (s={s}, f={f})")
    if f == 0:
        return mean(arr)
    return np.sort(arr, axis=0)[f : s - f].mean(axis=0)


def median(updates) -> np.ndarray:
    """Coordinate-wise median; an even count averages the two middle values."""
    return np.median(_stack(updates), axis=0)


def pairwise_sq_distances(arr: np.ndarray) -> np.ndarray:
    diff = arr[:, None, :] - arr[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def krum_scores(arr: np.ndarray, f: int) -> np.ndarray:
    """Sum of squared distances from each update to its ``s - f - 2`` nearest others.

    The neighbour count is clamped to ``[0, s - 1]`` so degenerate pools still score.
    """
    s = arr.shape[0]
    m = min(max(s - f - 2, 0), s - 1)
    dist = pairwise_sq_distances(arr)
    np.fill_diagonal(dist, np.inf)
    nearest = np.sort(dist, axis=1)[:, :m]
    return nearest.sum(axis=1)


def krum_index(updates, f: int) -> int:
    """Index of the Krum-selected update; ties go to the lowest index."""
    return int(np.argmin(krum_scores(_stack(updates), f)))


def krum(updates, f: int) -> np.ndarray:
    """The single update with the smallest Krum score.

    Requires at least one neighbour per score (``s >= f + 3``). The stricter
    resilience bound ``s > 2f + 2`` is enforced by :func:`admissibility_error`
    at configuration time.
    """
    arr = _stack(updates)
    s = arr.shape[0]
    if s - f - 2 < 1:
        raise ConfigurationError(f"krum needs s - f - 2 >= 1 (s={s}, f={f})")
    return arr[krum_index(arr, f)].copy()


def bulyan(updates, f: int) -> np.ndarray:
    """Iterated Krum selection of ``s - 2f`` updates, then a median-centred trimmed mean.

    For each coordinate the ``s - 4f`` selected values closest to the
    coordinate-wise median of the selection are averaged.
    """
    arr = _stack(updates)
    s = arr.shape[0]
    if not s >= 4 * f + 3:
        raise ConfigurationError(f"bulyan needs s >= 4f + 3 (s={s}, f={f})")
    pool = list(range(s))
    selected = []
    for _ in range(s - 2 * f):
        pick = krum_index(arr[pool], f)
        selected.append(pool.pop(pick))
    chosen = arr[selected]
    beta = s - 4 * f
    med = np.median(chosen, axis=0)
    closest = np.argsort(np.abs(chosen - med), axis=0, kind="stable")[:beta]
    return np.take_along_axis(chosen, closest, axis=0).mean(axis=0)


def aggregate(rule: str, updates, f: int = 0) -> np.ndarray:
    if rule == "mean":
        return mean(updates)
    if rule == "trimmed_mean":
        return trimmed_mean(updates, f)
    if rule == "median":
        return median(updates)
    if rule == "krum":
        return krum(updates, f)
    if rule == "bulyan":
        return bulyan(updates, f)
    raise ConfigurationError(f"unknown aggregation rule {rule!r}")
