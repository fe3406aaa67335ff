"""Seed fan-out.

A single master seed is expanded into independent per-stage, per-item
streams with SplitMix64. Each derived 64-bit value seeds a numpy ``PCG64``
generator, so results do not depend on scheduling or on how many items
were generated before.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 state; return ``(new_state, output)``."""
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def derive_seed(master: int, *path: str | int) -> int:
    """Derive a 64-bit seed from ``master`` and a path of labels/indices.

    Strings are hashed with CRC32 so that the mapping is stable across
    Python processes (``hash()`` is salted).
    """
    state = master & _MASK
    state, out = splitmix64(state)
    for part in path:
        if isinstance(part, str):
            token = zlib.crc32(part.encode("utf-8"))
        else:
            token = int(part) & _MASK
        state, out = splitmix64(out ^ token)
    return out


def stream(master: int, *path: str | int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, *path)))
