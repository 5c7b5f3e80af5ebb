"""Named, counter-based random streams.

Every consumer of randomness asks for a stream by a path of names, e.g.
``SeedTree(7).child("meta", 3).generator("agent")``.  Streams are Philox
generators keyed by the master seed and the path, so adding a consumer
never shifts the numbers seen by an unrelated one.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream indices must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def substream(seed: int, *path) -> np.random.Generator:
    """Return the generator for ``path`` under master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


class SeedTree:
    """A master seed plus a path prefix; cheap to copy and pass around."""

    __slots__ = ("seed", "path")

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(path)

    def child(self, *names) -> "SeedTree":
        return SeedTree(self.seed, self.path + names)

    def generator(self, *names) -> np.random.Generator:
        return substream(self.seed, *self.path, *names)

    def __repr__(self):
        return f"SeedTree({self.seed}, {self.path!r})"
