"""Deterministic RNG streams derived from one root seed.

Streams are keyed by a path (subsystem id, actor index, ...), so adding an
actor or a subsystem never perturbs the draws of existing ones.
"""

from __future__ import annotations

import numpy as np

# stable subsystem keys for spawn paths
PLACEMENT = 1
TRAFFIC = 2
RETRIEVAL = 3
FITTING = 4


def rng_for(root_seed: int, *path: int) -> np.random.Generator:
    """Independent generator for (root_seed, path...)."""
    ss = np.random.SeedSequence(int(root_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))
