"""Named, counter-based random streams.

Every random draw in the package comes from ``stream(seed, name, ...)``: a Philox
generator keyed by the root seed and a stable hash of the stream names. Streams
for different configurations or resamples are independent of each other and of
the order in which they are consumed.
"""
import zlib

import numpy as np


def _name_key(name) -> int:
    if isinstance(name, (int, np.integer)) and not isinstance(name, bool):
        return int(name)
    return zlib.crc32(str(name).encode("utf-8"))


def stream(seed: int, *names) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_name_key(n) for n in names))
    return np.random.Generator(np.random.Philox(seq))
