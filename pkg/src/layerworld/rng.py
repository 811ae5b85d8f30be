"""Seed derivation.

Every random draw in a run comes from a fresh generator keyed by
``(master seed, purpose tag, agent id, tick)``. The tag string is hashed with
CRC-32 so keys are stable across processes and Python versions. No generator
is shared or carried between ticks, so snapshots never need RNG state.
"""
from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, tag: str, agent: int = 0, tick: int = 0) -> np.random.Generator:
    key = (zlib.crc32(tag.encode("utf-8")), agent, tick)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
