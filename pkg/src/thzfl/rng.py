"""Deterministic named RNG substreams.

Every source of randomness in the simulator draws from a substream keyed on
(master_seed, *name_parts).  Streams are independent of each other and of
the order in which they are created, so per-client work can be farmed out
to a worker pool without affecting the numbers.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream_seed(master_seed: int, *parts) -> int:
    """Map (master_seed, *parts) to a stable 64-bit seed."""
    key = ":".join([str(int(master_seed)), *[str(p) for p in parts]])
    digest = hashlib.sha256(key.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")


def substream(master_seed: int, *parts) -> np.random.Generator:
    """Return a fresh generator for the named substream."""
    return np.random.default_rng(substream_seed(master_seed, *parts))
