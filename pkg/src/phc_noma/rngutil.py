"""Deterministic, counter-style random streams.

Every consumer receives a `numpy.random.Generator` derived from a
`SeedSequence` keyed by (master seed, named stream, trial index), so trials
can run on any number of workers in any order and still reproduce
bit-exactly.
"""

from __future__ import annotations

import numpy as np

# stable stream ids; never renumber, only append
STREAMS = {
    "profiles": 1,
    "delays": 2,
    "activity": 3,
    "fading": 4,
    "data": 5,
    "photons": 6,
    "csi": 7,
    "vp": 8,
    "exit": 9,
}


def stream(seed: int, name: str, trial: int = 0) -> np.random.Generator:
    """Generator for a named stream of one trial, independent of all others."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[name], int(trial)))
    return np.random.Generator(np.random.Philox(ss))
