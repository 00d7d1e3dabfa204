"""Deterministic random streams.

Every random draw in a simulation comes from a stream keyed by
``(seed, purpose, *keys)`` (e.g. round and client id), so results do not
depend on the order in which clients are processed.

Streams are numpy ``PCG64`` generators seeded through ``SeedSequence``.
Gaussian variates use numpy's ziggurat sampler (``Generator.standard_normal``);
both are fixed by numpy's stream-compatibility policy for a given version.
"""

from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    MASK_INIT = 1
    SAMPLING = 2
    TRAIN = 3
    NOISE = 4
    BYZANTINE_IDS = 5
    PARTITION = 6
    DATA = 7
    MODEL_INIT = 8
    DIAG_TRAIN = 9
    DIAG_NOISE = 10
    ATTACK_NOISE = 11


def stream(seed, purpose, *keys):
    """Return a fresh generator for ``(seed, purpose, *keys)``."""
    entropy = [int(seed), int(purpose), *(int(k) for k in keys)]
    if any(e < 0 for e in entropy):
        raise ValueError(f"stream keys must be non-negative, got {entropy}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
