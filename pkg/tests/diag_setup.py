"""Instrumented-mode configurations shared by the diagnostic tests and the acceptance suite."""

import numpy as np

from fedvrdp.config import from_dict
from fedvrdp.model import gradient
from fedvrdp.orchestrator import Federation, ServerState
from fedvrdp.sparse_dp import generate_mask


def instrumented(**overrides):
    base = {
        "seed": 5,
        "n": 20,
        "s": 20,
        "T": 1,
        "dataset": {"kind": "synthetic", "num_classes": 10, "dim": 20, "train_size": 400, "test_size": 100},
        "trainer": {"eta": 1.0, "kappa": 1.0, "tau": 1, "batch_size": 20},
    }
    cfg = from_dict(base)
    return Federation(cfg.replace(**overrides) if overrides else cfg)


def trained_state(fed, rounds=3, seed=0):
    """A non-trivial model: a few plain gradient steps from the initial point plus a top-k mask."""
    state = fed.initial_state()
    x = state.x
    for _ in range(rounds):
        x = x - 0.5 * np.mean([gradient(fed.spec, x, c.shard) for c in fed.clients], axis=0)
    x = x + 0.01 * np.random.default_rng(seed).standard_normal(x.size)
    return ServerState(x, generate_mask(x, fed.k), 0)


def max_gradient_norm(fed, state):
    return max(float(np.linalg.norm(gradient(fed.spec, state.x, c.shard))) for c in fed.clients)
