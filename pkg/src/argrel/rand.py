"""Seeded random substreams.

Every run takes one integer seed; components derive independent generators
from it by name so that e.g. dropout masks do not shift when the selection
strategy changes.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, *tags: object) -> np.random.Generator:
    """Generator for the substream identified by (seed, *tags).

    Tags are hashed with crc32 so the mapping is stable across platforms and
    Python processes (unlike builtin hash()).
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    for tag in tags:
        entropy.append(zlib.crc32(repr(tag).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *tags: object) -> int:
    """Plain integer sub-seed for APIs that take one."""
    acc = int(seed) & 0xFFFFFFFF
    for tag in tags:
        acc = zlib.crc32(repr(tag).encode("utf-8"), acc)
    return acc
