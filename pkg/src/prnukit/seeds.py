"""Deterministic random-stream derivation.

All randomness flows from a single root seed through named derivation:
a purpose string plus integer indices select an independent stream, so any
sub-computation is reproducible in isolation and results do not depend on
scheduling order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_rng(root_seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Return a generator keyed by (root seed, purpose string, indices)."""
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in (0, 4, 8, 12)]
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF, *words, *(int(i) for i in indices)]
    return np.random.default_rng(np.random.SeedSequence(entropy))
