"""Counter-based random streams keyed by (seed, purpose, indices).

A stream is a Philox generator whose key is derived from the run seed plus a
tuple of integers, so every (replica, step) draw is reproducible regardless of
the order in which work is scheduled.
"""

import zlib

import numpy as np

PURPOSES = {"init": 1, "noise": 2, "mc": 3, "bootstrap": 4, "probe": 5,
            "subsample": 6, "field": 7}


def stream(seed, purpose, *indices) -> np.random.Generator:
    tag = PURPOSES.get(purpose)
    if tag is None:
        tag = zlib.crc32(purpose.encode()) | (1 << 32)
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64,
                                spawn_key=(tag,) + tuple(int(i) for i in indices))
    return np.random.Generator(np.random.Philox(ss))
