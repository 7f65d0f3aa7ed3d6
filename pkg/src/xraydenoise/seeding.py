"""Deterministic seed derivation for the whole pipeline.

Every stochastic stage (phantom generation, patch sampling, weight init,
per-iteration noise, evaluation noise) derives its own integer seed from one
root seed plus a string/integer key path, via numpy's SeedSequence. One root
seed therefore fixes the entire run, and streams for different stages are
statistically independent.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(root: int, *key) -> int:
    """Derive a child seed from a root seed and a key path.

    String components are crc32-hashed so keys like ("noise", epoch, step)
    mix into SeedSequence entropy deterministically across platforms.
    """
    parts = [int(root) & 0xFFFFFFFF]
    for part in key:
        if isinstance(part, str):
            parts.append(zlib.crc32(part.encode("utf-8")))
        else:
            parts.append(int(part) & 0xFFFFFFFF)
    ss = np.random.SeedSequence(parts)
    return int(ss.generate_state(1, np.uint64)[0])
