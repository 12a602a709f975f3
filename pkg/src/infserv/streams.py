"""Reproducible random streams.

Every stream is a Philox-4x64 counter-based generator keyed through
``numpy.random.SeedSequence(entropy=seed, spawn_key=(role, index, ...))``.
``role`` is a small integer naming what the stream drives (see ``Role``);
``index`` is the replica, cycle or run number. Any implementation that
reproduces this derivation and the buffered draw order of ``Stream`` gets
identical samples.
"""

from __future__ import annotations

import enum

import numpy as np

SEED_DERIVATION_VERSION = "philox4x64-seedsequence-v1"
_BLOCK = 256


class Role(enum.IntEnum):
    ARRIVALS = 1
    SERVICE = 2
    COMMON = 3
    REMAINDER_X = 4
    REMAINDER_Y = 5
    SERVICE_X = 6
    SERVICE_Y = 7
    STATIONARY = 8
    AUX = 9


def generator(seed: int, *path: int) -> np.random.Generator:
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


class Stream:
    """Buffered scalar draws from one derived generator.

    Unit exponentials and uniforms come from separate blocks of ``_BLOCK``
    values; a block is refilled only when exhausted.
    """

    __slots__ = ("_gen", "_exp", "_ie", "_uni", "_iu")

    def __init__(self, seed: int, *path: int):
        self._gen = generator(seed, *path)
        self._exp: list[float] = []
        self._ie = 0
        self._uni: list[float] = []
        self._iu = 0

    def exponential(self) -> float:
        if self._ie == len(self._exp):
            self._exp = self._gen.standard_exponential(_BLOCK).tolist()
            self._ie = 0
        v = self._exp[self._ie]
        self._ie += 1
        return v

    def uniform(self) -> float:
        if self._iu == len(self._uni):
            self._uni = self._gen.random(_BLOCK).tolist()
            self._iu = 0
        v = self._uni[self._iu]
        self._iu += 1
        return v

    def integer(self, n: int) -> int:
        """Uniform integer in ``1..n``."""
        return min(int(self.uniform() * n), n - 1) + 1
