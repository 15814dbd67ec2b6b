"""Named, independent random streams derived from one master seed.

Splitting rule: stream ``name`` under master seed ``s`` is
``numpy.random.Generator(PCG64(SeedSequence(s, spawn_key=(crc32(name),))))``.
The rule depends only on (seed, name), so adding a stream never shifts the
values drawn by another one.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def make_generator(seed: int, name: str) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(stream_key(name),))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, name: str) -> int:
    """64-bit child seed, used to give sweep grid points their own master seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(stream_key(name),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class RngStreams:
    """Lazily created generators keyed by stream name.

    >>> s = RngStreams(7)
    >>> a = s["update_nu"].random()
    >>> RngStreams(7)["update_nu"].random() == a
    True
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        gen = self._streams.get(name)
        if gen is None:
            gen = make_generator(self.seed, name)
            self._streams[name] = gen
        return gen

    def names(self) -> list[str]:
        return sorted(self._streams)
