"""Benign client local training: momentum SGD from the received global model."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, TrainingDivergedError
from .model import Dataset, ModelSpec, gradient


@dataclass(frozen=True)
class TrainerConfig:
    """Local optimizer settings.

    ``kappa`` weights the fresh gradient in the momentum buffer; ``kappa=1``
    is plain SGD. ``lr_decay`` multiplies ``eta`` once per global round.
    A non-zero ``local_epochs`` replaces ``tau`` by that many passes over the
    client's shard (see :meth:`resolve`).
    With ``negated_momentum`` the buffer update subtracts the gradient
    and the parameter step uses the buffer from *before* the update.
    """

    eta: float = 0.1
    kappa: float = 0.5
    tau: int = 10
    batch_size: int = 10
    lr_decay: float = 1.0
    negated_momentum: bool = False
    local_epochs: int = 0

    def __post_init__(self):
        if not (self.eta >= 0 and math.isfinite(self.eta)):
            raise ConfigurationError(f"must be a finite non-negative number, got {self.eta}", "trainer.eta")
        if not 0 < self.kappa <= 1:
            raise ConfigurationError(f"must lie in (0, 1], got {self.kappa}", "trainer.kappa")
        if int(self.tau) != self.tau or self.tau < 1:
            raise ConfigurationError(f"must be an integer >= 1, got {self.tau}", "trainer.tau")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigurationError(f"must be an integer >= 1, got {self.batch_size}", "trainer.batch_size")
        if not 0 < self.lr_decay <= 1:
            raise ConfigurationError(f"must lie in (0, 1], got {self.lr_decay}", "trainer.lr_decay")
        if int(self.local_epochs) != self.local_epochs or self.local_epochs < 0:
            raise ConfigurationError(f"must be an integer >= 0, got {self.local_epochs}", "trainer.local_epochs")

    def resolve(self, shard_size: int) -> "TrainerConfig":
        """Config with ``tau`` fixed for a shard of ``shard_size`` points."""
        if not self.local_epochs:
            return self
        tau = iterations_for_epochs(self.local_epochs, shard_size, self.batch_size)
        return replace(self, tau=tau, local_epochs=0)

    def for_round(self, round_index: int) -> "TrainerConfig":
        """Config with the learning rate decayed for global round ``round_index``."""
        return replace(self, eta=self.eta * self.lr_decay**round_index)


def iterations_for_epochs(epochs: int, shard_size: int, batch_size: int) -> int:
    """Number of local iterations covering ``epochs`` passes over a shard."""
    return epochs * math.ceil(shard_size / batch_size)


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    """Yield index arrays forever: reshuffle each epoch, sample without replacement.

    The last batch of an epoch is short when ``batch_size`` does not divide ``n``.
    """
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start : start + batch_size]


def local_update(
    spec: ModelSpec,
    x_global: np.ndarray,
    shard: Dataset,
    cfg: TrainerConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Run ``cfg.tau`` momentum-SGD steps and return ``x_global - x_local``.

    The momentum buffer starts at zero on every call.
    """
    if len(shard) == 0:
        raise ConfigurationError("client shard is empty")
    x_global = np.asarray(x_global, dtype=np.float64)
    x = x_global.copy()
    v = np.zeros_like(x)
    batches = minibatches(len(shard), cfg.batch_size, rng)
    for step in range(cfg.tau):
        g = gradient(spec, x, shard.subset(next(batches)))
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(
                f"non-finite gradient at local step {step} (|x|max={np.abs(x).max():.3g})"
            )
        if cfg.negated_momentum:
            v_prev = v
            v = (1.0 - cfg.kappa) * v - cfg.kappa * g
            x = x - cfg.eta * v_prev
        else:
            v = (1.0 - cfg.kappa) * v + cfg.kappa * g
            x = x - cfg.eta * v
    update = x_global - x
    if not np.all(np.isfinite(update)):
        raise TrainingDivergedError("local update is not finite")
    return update
