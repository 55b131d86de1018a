"""Deterministic random-stream derivation.

Every stochastic component draws from a numpy Generator derived from one
integer seed plus a label path, e.g. ``generator(seed, "train", step, gid)``.
Labels hash stably (md5), so the same (seed, labels) pair yields the same
stream on any platform or process, which is what makes parallel and serial
execution bit-identical.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _part_to_int(part) -> int:
    if isinstance(part, bool):
        raise TypeError("bool is not a valid seed part")
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    if isinstance(part, str):
        digest = hashlib.md5(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"seed parts must be int or str, got {type(part).__name__}")


def seed_sequence(seed: int, *parts) -> np.random.SeedSequence:
    entropy = [_part_to_int(seed)] + [_part_to_int(p) for p in parts]
    return np.random.SeedSequence(entropy)


def generator(seed: int, *parts) -> np.random.Generator:
    """PCG64 generator for the substream named by ``parts``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *parts)))
