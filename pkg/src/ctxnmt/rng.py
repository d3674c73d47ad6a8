"""Seeded random substreams.

All toolkit randomness flows from one integer seed; components draw from
named substreams so they can be re-seeded independently without coupling
their draw counts.
"""

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Deterministic generator for (seed, name); stable across runs."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))]))
