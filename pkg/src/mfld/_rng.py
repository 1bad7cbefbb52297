"""Seeded, splittable random streams.

Every random draw in the package comes from a ``numpy.random.Generator``
whose ``SeedSequence`` is built from a master seed plus a spawn key of
(purpose tag, integer indices). Streams with different keys are
statistically independent and never share state.
"""
import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_code(tag):
    return zlib.crc32(tag.encode("utf-8"))


def seed_sequence(seed, tag, *indices):
    key = (_tag_code(tag),) + tuple(int(i) for i in indices)
    return np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=key)


def stream(seed, tag, *indices):
    """Return a fresh Generator for ``(seed, tag, *indices)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, tag, *indices)))


def derive_seed(seed, tag, *indices):
    """Derive a child 64-bit seed, e.g. one per pool member."""
    state = seed_sequence(seed, tag, *indices).generate_state(2, np.uint32)
    return (int(state[0]) << 32) | int(state[1])
