"""Deterministic RNG streams derived from a root seed and a purpose label."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root_seed: int, *parts: object) -> int:
    """A stable 64-bit seed from the root seed and any hashable purpose parts."""
    text = "|".join([str(int(root_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(root_seed: int, *parts: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, *parts))
