"""Closed-form client-level DP accounting for subsampled Gaussian federated averaging.

The guarantee used here: with clients sampled at rate ``q = s/n``, training
for ``T`` rounds with noise multiplier ``sigma`` is ``(eps, delta)``-DP for
any ``eps < 2 ln(1/delta)`` provided::

    sigma**2 >= 7 q**2 T (eps + 2 ln(1/delta)) / eps**2

All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError, DomainError, NotCertifiableError


@dataclass(frozen=True)
class PrivacyParams:
    sigma: float
    delta: float
    q: float
    T: int


def _check_common(delta, q, T):
    if not 0 < delta < 1:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    if not 0 < q <= 1:
        raise ConfigurationError(f"q must lie in (0, 1], got {q}")
    if int(T) != T or T < 0:
        raise ConfigurationError(f"T must be a non-negative integer, got {T}")


def epsilon_ceiling(delta: float) -> float:
    """Upper limit ``2 ln(1/delta)`` on epsilons the bound can certify."""
    return 2.0 * math.log(1.0 / delta)


def sigma_for(epsilon: float, delta: float, q: float, T: int) -> float:
    """Smallest noise multiplier certifying ``(epsilon, delta)`` after ``T`` rounds."""
    _check_common(delta, q, T)
    if not epsilon > 0:
        raise ConfigurationError(f"epsilon must be > 0, got {epsilon}")
    ceiling = epsilon_ceiling(delta)
    if epsilon >= ceiling:
        raise DomainError(
            f"epsilon={epsilon} is not below 2 ln(1/delta)={ceiling:.6g}; bound does not apply"
        )
    return math.sqrt(7.0 * q * q * T * (epsilon + ceiling) / (epsilon * epsilon))


def epsilon_for(sigma: float, delta: float, q: float, T: int) -> float:
    """Smallest epsilon certified at noise multiplier ``sigma`` after ``T`` rounds.

    Solves ``sigma^2 eps^2 - 7 q^2 T eps - 14 q^2 T ln(1/delta) = 0`` for its
    positive root.

    Raises:
        NotCertifiableError: if the root is not below ``2 ln(1/delta)``.
    """
    _check_common(delta, q, T)
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ConfigurationError(f"sigma must be finite and > 0, got {sigma}")
    if T == 0:
        return 0.0
    a = 7.0 * q * q * T
    log_inv_delta = math.log(1.0 / delta)
    s2 = sigma * sigma
    eps = (a + math.sqrt(a * a + 8.0 * s2 * a * log_inv_delta)) / (2.0 * s2)
    if eps >= 2.0 * log_inv_delta:
        raise NotCertifiableError(
            f"guarantee not certifiable at sigma={sigma}: root eps={eps:.6g} "
            f">= 2 ln(1/delta)={2.0 * log_inv_delta:.6g}"
        )
    return eps


def per_round_ledger(params: PrivacyParams, current_round: int) -> float:
    """Epsilon spent after ``current_round`` of ``params.T`` rounds."""
    if int(current_round) != current_round or not 0 <= current_round <= params.T:
        raise ConfigurationError(f"current_round must lie in [0, {params.T}], got {current_round}")
    return epsilon_for(params.sigma, params.delta, params.q, current_round)


def ledger_or_inf(params: PrivacyParams, current_round: int) -> float:
    """Like :func:`per_round_ledger` but ``inf`` where nothing can be certified."""
    if current_round == 0:
        return 0.0
    if params.sigma == 0:
        return math.inf
    try:
        return per_round_ledger(params, current_round)
    except NotCertifiableError:
        return math.inf
