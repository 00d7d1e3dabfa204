"""Byzantine model-poisoning attacks.

Two optimized untargeted attacks are provided:

* ``agr``: min-max attack. All attackers send ``mu + gamma * dp`` where ``mu``
  is the attackers' estimate of the benign update and ``gamma`` is the largest
  value keeping the malicious update within the spread of the visible updates.
* ``fang``: aggregator-aware directed deviation. Attackers send
  ``mu - lam * sign(mu)`` with ``lam`` as large as possible while a simulated
  run of the server's rule still picks the malicious update.

Under ``partial`` knowledge the attackers only see the honest updates they
computed on their own shards; under ``full`` knowledge they also see the
benign updates of the round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aggregators import RULES, krum_index
from .errors import ConfigurationError
from .sparse_dp import Mask, apply_mask

ATTACK_KINDS = ("none", "fang", "agr")
KNOWLEDGE = ("partial", "full")
PERTURBATIONS = ("neg_unit", "neg_sign", "neg_std")
_MAX_DOUBLINGS = 64


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "none"
    knowledge: str = "partial"
    perturbation: str = "neg_std"
    gamma_init: float = 10.0
    gamma_tol: float = 1e-5
    lambda_init: float = 10.0
    lambda_tol: float = 1e-5
    target_rule: str | None = None
    attacker_noise: bool = False

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigurationError(f"expected one of {ATTACK_KINDS}, got {self.kind!r}", "attack.kind")
        if self.knowledge not in KNOWLEDGE:
            raise ConfigurationError(f"expected one of {KNOWLEDGE}, got {self.knowledge!r}", "attack.knowledge")
        if self.perturbation not in PERTURBATIONS:
            raise ConfigurationError(
                f"expected one of {PERTURBATIONS}, got {self.perturbation!r}", "attack.perturbation"
            )
        for name in ("gamma_init", "gamma_tol", "lambda_init", "lambda_tol"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"must be finite and > 0, got {value}", f"attack.{name}")
        if self.gamma_init < self.gamma_tol:
            raise ConfigurationError("gamma_init must be >= gamma_tol", "attack.gamma_init")
        if self.lambda_init < self.lambda_tol:
            raise ConfigurationError("lambda_init must be >= lambda_tol", "attack.lambda_init")
        if self.target_rule is not None and self.target_rule not in RULES:
            raise ConfigurationError(f"expected one of {RULES}, got {self.target_rule!r}", "attack.target_rule")


@dataclass
class AttackerView:
    """What the coordinated attackers know in one round."""

    x_global: np.ndarray
    mask: Mask
    attacker_updates: list
    benign_updates: list = field(default_factory=list)
    knowledge: str = "partial"

    def __post_init__(self):
        if self.knowledge == "partial" and self.benign_updates:
            raise ConfigurationError("partial-knowledge view must not contain benign updates")

    @property
    def visible(self) -> list:
        if self.knowledge == "full":
            return list(self.benign_updates)
        return list(self.attacker_updates)


def reference_aggregate(view: AttackerView) -> np.ndarray | None:
    """Mean of the updates visible to the attackers, or None if they see nothing."""
    visible = view.visible
    if not visible:
        return None
    return np.mean(np.asarray(visible, dtype=np.float64), axis=0)


def perturbation_direction(kind: str, mu: np.ndarray, visible) -> np.ndarray:
    if kind == "neg_unit":
        norm = np.linalg.norm(mu)
        if norm == 0:
            return -np.sign(mu)
        return -mu / norm
    if kind == "neg_sign":
        return -np.sign(mu)
    if kind == "neg_std":
        return -np.std(np.asarray(visible, dtype=np.float64), axis=0)
    raise ConfigurationError(f"unknown perturbation {kind!r}")


def max_pairwise_distance(updates) -> float:
    arr = np.asarray(updates, dtype=np.float64)
    diff = arr[:, None, :] - arr[None, :, :]
    return float(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).max()))


def search_gamma(mu, direction, updates, radius, gamma_init, gamma_tol) -> float:
    """Largest ``gamma >= 0`` with ``max_i ||mu + gamma*direction - u_i|| <= radius``.

    The feasible set is an interval containing 0, so the search doubles from
    ``gamma_init`` until infeasible and then bisects to ``gamma_tol``.
    """
    arr = np.asarray(updates, dtype=np.float64)
    if not np.any(direction):
        return 0.0

    def ok(gamma):
        m = mu + gamma * direction
        return float(np.sqrt(((arr - m) ** 2).sum(axis=1)).max()) <= radius

    lo, hi = 0.0, gamma_init
    for _ in range(_MAX_DOUBLINGS):
        if not ok(hi):
            break
        lo, hi = hi, 2.0 * hi
    else:
        return lo
    while hi - lo > gamma_tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def agr_attack(view: AttackerView, cfg: AttackConfig, n_byzantine: int) -> list:
    """Min-max AGR attack; returns one (masked) malicious update per attacker."""
    if n_byzantine == 0:
        return []
    mu = reference_aggregate(view)
    if mu is None:
        return [apply_mask(u, view.mask) for u in view.attacker_updates]
    visible = view.visible
    kind = cfg.perturbation
    if kind == "neg_unit" and np.linalg.norm(mu) == 0:
        kind = "neg_sign"
    direction = perturbation_direction(kind, mu, visible)
    if len(visible) < 2:
        gamma = cfg.gamma_init
    else:
        radius = max_pairwise_distance(visible)
        gamma = search_gamma(mu, direction, visible, radius, cfg.gamma_init, cfg.gamma_tol)
    malicious = apply_mask(mu + gamma * direction, view.mask)
    return [malicious.copy() for _ in range(n_byzantine)]


def malicious_selected(rule: str, malicious, visible, n_byzantine: int, f: int) -> bool:
    """Whether a simulated distance-based rule picks a malicious update first.

    The simulated pool lists the ``n_byzantine`` malicious copies before the
    visible updates, so score ties favour the attacker. For ``bulyan`` this is
    the first pick of its Krum selection phase.
    """
    pool = np.vstack([np.tile(malicious, (n_byzantine, 1)), np.asarray(visible, dtype=np.float64)])
    return krum_index(pool, f) < n_byzantine


def search_lambda(mu, visible, n_byzantine, f, rule, lambda_init, lambda_tol) -> float:
    """Largest ``lam`` for which the simulated ``rule`` still selects ``mu - lam*sign(mu)``.

    Halves from ``lambda_init`` until a selected value is found, then bisects
    between it and the last rejected value down to ``lambda_tol``. Returns
    ``lambda_tol`` when nothing down to the tolerance is selected.
    """
    direction = np.sign(mu)

    def ok(lam):
        return malicious_selected(rule, mu - lam * direction, visible, n_byzantine, f)

    lam = lambda_init
    while lam >= lambda_tol:
        if ok(lam):
            break
        lam /= 2.0
    else:
        return lambda_tol
    if lam == lambda_init:
        return lam
    lo, hi = lam, 2.0 * lam
    while hi - lo > lambda_tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def fang_attack(view: AttackerView, cfg: AttackConfig, n_byzantine: int, f: int = 0) -> list:
    """Aggregator-aware directed-deviation attack against ``cfg.target_rule``.

    ``f`` is the server's robustness parameter, which the attackers are
    assumed to know along with the rule.
    """
    if n_byzantine == 0:
        return []
    if cfg.target_rule is None:
        raise ConfigurationError("fang attack needs a target rule", "attack.target_rule")
    mu = reference_aggregate(view)
    if mu is None:
        return [apply_mask(u, view.mask) for u in view.attacker_updates]
    if cfg.target_rule in ("krum", "bulyan"):
        lam = search_lambda(
            mu, view.visible, n_byzantine, f, cfg.target_rule, cfg.lambda_init, cfg.lambda_tol
        )
    else:
        lam = cfg.lambda_init
    malicious = apply_mask(mu - lam * np.sign(mu), view.mask)
    return [malicious.copy() for _ in range(n_byzantine)]


def craft(view: AttackerView, cfg: AttackConfig, n_byzantine: int, f: int = 0) -> list:
    """Dispatch to the configured attack; ``none`` returns the masked honest updates."""
    if cfg.kind == "agr":
        return agr_attack(view, cfg, n_byzantine)
    if cfg.kind == "fang":
        return fang_attack(view, cfg, n_byzantine, f)
    return [apply_mask(u, view.mask) for u in view.attacker_updates]
