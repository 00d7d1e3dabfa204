"""Monte Carlo check of the aggregated-update error decomposition.

In instrumented mode (one local step, every client participating) each
client's update is its minibatch gradient pushed through the mechanism, and
the averaged update ``Delta`` should satisfy, in expectation::

    E||Delta - grad f(x)||^2 <= 4/(n-B) * sum_benign E||g_i - grad f_i(x)||^2
                              + 2/B * sum_byz E||b_j||^2
                              + k C^2 sigma^2 / n
                              + 4 * max_i ||grad f_i(x)||^2

where ``k = d`` without sparsification. Updates are measured in gradient
units (unit learning rate, no momentum).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .model import gradient
from .rng import Purpose, stream
from .sparse_dp import apply_mask, clip
from .trainer import minibatches


@dataclass(frozen=True)
class VarianceDiagnostic:
    lhs: float
    rhs_benign: float
    rhs_byz: float
    rhs_dp: float
    rhs_hetero: float
    dp_empirical: float
    mc_reps: int

    @property
    def rhs_terms(self) -> tuple:
        return (self.rhs_benign, self.rhs_byz, self.rhs_dp, self.rhs_hetero)

    @property
    def rhs_total(self) -> float:
        return sum(self.rhs_terms)


def variance_diagnostic(fed, state, mc_reps: int) -> VarianceDiagnostic:
    """Estimate both sides of the decomposition at ``state.x`` from ``mc_reps`` repetitions.

    Args:
        fed: a :class:`~fedvrdp.orchestrator.Federation` with ``s == n`` and ``tau == 1``.
        state: server state whose model and mask are probed.
        mc_reps: number of Monte Carlo repetitions (minibatch and noise draws).
    """
    cfg = fed.config
    if cfg.s != cfg.n or cfg.trainer.tau != 1 or cfg.trainer.local_epochs:
        raise ConfigurationError("variance diagnostic needs s == n and tau == 1", "diagnostic_reps")
    if mc_reps < 1:
        raise ConfigurationError(f"mc_reps must be >= 1, got {mc_reps}")

    spec, x, t = fed.spec, state.x, state.round
    n = cfg.n
    ids = list(range(n))
    attacking = cfg.attack.kind != "none"
    byz = [i for i in ids if fed.clients[i].is_byzantine] if attacking else []
    benign = [i for i in ids if i not in byz]
    true_grads = np.stack([gradient(spec, x, fed.clients[i].shard) for i in ids])
    full_grad = true_grads.mean(axis=0)

    lhs = 0.0
    benign_var = 0.0
    byz_sq = 0.0
    noise_sq = 0.0
    for rep in range(mc_reps):
        raw = {}
        for i in ids:
            shard = fed.clients[i].shard
            rng = stream(cfg.seed, Purpose.DIAG_TRAIN, t, rep, i)
            batch = next(minibatches(len(shard), cfg.trainer.batch_size, rng))
            raw[i] = gradient(spec, x, shard.subset(batch))
        submitted = fed.submissions(x, state.mask, raw, t, noise_purpose=Purpose.DIAG_NOISE, rep=rep)
        dense = np.stack([u.dense() for u in submitted])
        delta = dense.mean(axis=0)
        lhs += float(np.sum((delta - full_grad) ** 2))
        for i in benign:
            benign_var += float(np.sum((raw[i] - true_grads[i]) ** 2))
        for j in byz:
            byz_sq += float(np.sum(dense[j] ** 2))
        if cfg.dp.sigma > 0 and benign:
            # the noise is what remains after removing the clipped, masked gradient
            noise = np.zeros(fed.d)
            for i in benign:
                noise += dense[i] - clip(apply_mask(raw[i], state.mask), cfg.dp.clip)
            noise_sq += float(np.sum((noise / n) ** 2))

    reps = float(mc_reps)
    sigma, c = cfg.dp.sigma, cfg.dp.clip
    rhs_dp = 0.0 if sigma == 0 else state.mask.k * c * c * sigma * sigma / n
    kappa_sq = float(np.max(np.sum(true_grads**2, axis=1)))
    return VarianceDiagnostic(
        lhs=lhs / reps,
        rhs_benign=4.0 / (n - len(byz)) * benign_var / reps if benign else 0.0,
        rhs_byz=2.0 / len(byz) * byz_sq / reps if byz else 0.0,
        rhs_dp=rhs_dp,
        rhs_hetero=4.0 * kappa_sq,
        dp_empirical=noise_sq / reps,
        mc_reps=mc_reps,
    )


def dp_contribution(fed_noisy, fed_clean, state, mc_reps: int) -> float:
    """Measured DP share of the error: ``lhs`` with noise minus ``lhs`` without.

    Both federations must differ only in ``dp.sigma``; minibatch draws are
    shared through the common random streams, so the difference isolates the noise.
    """
    if not math.isclose(fed_noisy.config.dp.clip, fed_clean.config.dp.clip):
        raise ConfigurationError("dp_contribution needs the same clipping threshold in both runs")
    noisy = variance_diagnostic(fed_noisy, state, mc_reps)
    clean = variance_diagnostic(fed_clean, state, mc_reps)
    return noisy.lhs - clean.lhs
