"""Deterministic RNG substream derivation.

All randomness in the package flows from one master seed.  A consumer at
position ``path`` in the work tree (replicate index, experiment path index,
oracle draws, ...) gets its own independent generator that is a pure function
of ``(seed, *path)``, so results do not depend on execution order and
replicates can run concurrently.
"""

from __future__ import annotations

import numpy as np

# Stream labels (first spawn-key component).
PREDICTOR = 0
REPLICATE = 1
PATH = 2
ORACLE = 3
WINDOW = 4
SIMULATE = 5
PROBE = 6


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream at ``path`` under ``seed``.

    Uses ``SeedSequence(seed, spawn_key=path)``: children with different
    paths are statistically independent, and the mapping is stable across
    platforms and numpy versions that keep the SeedSequence contract.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))
