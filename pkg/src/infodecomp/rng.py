"""Deterministic splittable random streams.

Every stochastic operation in the package derives its draws from
``substream(seed, *path)`` where ``path`` is a tuple of small integers naming
the consumer (e.g. one stream per alpha-draw index). Streams are independent,
reproducible, and insensitive to evaluation order, so estimators stay
bit-identical under any parallel partitioning.
"""

from __future__ import annotations

import numpy as np

# stream-name constants; keep values stable, they are part of reproducibility
ALPHA_STREAM = 0
EPS_STREAM = 1
X_STREAM = 2
INIT_STREAM = 3
STEP_STREAM = 4
CASE_STREAM = 5


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return a counter-based generator for the (seed, path) pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
