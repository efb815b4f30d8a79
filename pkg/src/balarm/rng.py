"""Seeded, counter-based random streams.

Every random quantity in the package is drawn from a Philox generator keyed
by ``(master seed, *keys)``.  A stream therefore depends only on its keys and
never on the order in which workers happen to request streams, which is what
makes simulations bit-reproducible under any degree of parallelism.
"""
from __future__ import annotations

import numpy as np

# spawn-key namespaces
LABELS = 0
EDGES = 1
RESTARTS = 2
REPLICATES = 3
CELLS = 4
NULL_SERIES = 5
PAIRS = 6
EDGE_TESTS = 7


def seed_sequence(seed, *keys: int) -> np.random.SeedSequence:
    """Return the :class:`~numpy.random.SeedSequence` for ``(seed, *keys)``.

    ``seed`` may itself be a ``SeedSequence``; its spawn key is then extended.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(keys))
    if seed is None:
        raise TypeError("an explicit seed is required")
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))


def stream(seed, *keys: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *keys)))


def derive_seed(seed, *keys: int) -> int:
    """Derive a plain integer seed, e.g. for a sweep cell or a restart."""
    return int(seed_sequence(seed, *keys).generate_state(1, dtype=np.uint64)[0])
