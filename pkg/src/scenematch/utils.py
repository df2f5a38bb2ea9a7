"""Shared plumbing: named RNG streams and stable hashing."""

from __future__ import annotations

import hashlib

import numpy as np


def stable_hash64(text: str) -> int:
    """First 8 bytes of sha256, as an int. Stable across runs and platforms."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Derive an independent, reproducible generator for a named sub-stream.

    All randomness in the package flows from one root seed through named
    streams (e.g. "init", "sampler.3", "augment.3") so each component is
    independently reproducible.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, stable_hash64(name)]))
