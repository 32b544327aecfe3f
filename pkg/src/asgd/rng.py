"""Deterministic derivation of independent random streams.

Every consumer of randomness gets its own child generator derived from
(seed, purpose tag, optional index). Streams are independent by SeedSequence
construction, so adding iterations, workers, or replicas never perturbs the
draws of an existing stream.
"""

from __future__ import annotations

import numpy as np

# Purpose tags. Distinct small integers; the values are arbitrary but frozen,
# changing them changes every seeded run. Tags must stay nonzero: SeedSequence
# zero-pads its entropy, so a trailing zero aliases the shorter path.
DELAYS = 1
GRADIENTS = 2
WORKER_RATES = 3
WORKER_GAPS = 4
PROBLEM_DATA = 5
PROBLEM_START = 6
PROBLEM_PROBE = 7

__all__ = [
    "DELAYS",
    "GRADIENTS",
    "WORKER_RATES",
    "WORKER_GAPS",
    "PROBLEM_DATA",
    "PROBLEM_START",
    "PROBLEM_PROBE",
    "stream",
]


def stream(seed: int, *path: int) -> np.random.Generator:
    """Child generator for ``(seed, *path)``.

    The same arguments always yield the same stream, and different paths
    yield statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))
