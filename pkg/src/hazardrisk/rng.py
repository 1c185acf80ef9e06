"""Named, independently seedable random streams.

Every stream is addressed by a master seed plus a key path such as
``("bn", "host_velocity", 3)``. The same address always yields the same
generator, so results do not depend on how work is split across workers.
"""

import zlib

import numpy as np


def _key_to_int(key):
    if isinstance(key, (bool, np.bool_)):
        raise TypeError("boolean stream keys are ambiguous")
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("integer stream keys must be non-negative")
        return int(key)
    if isinstance(key, str):
        # crc32 is stable across interpreter runs, unlike hash()
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"unsupported stream key {key!r}")


def stream(seed, *keys):
    """Return a generator for stream ``keys`` under master ``seed``."""
    if seed is None:
        raise ValueError("a master seed is required for reproducible streams")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng):
    """Accept a Generator, an int seed, or None and return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng()
    return stream(rng)
