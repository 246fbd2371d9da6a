"""Deterministic random stream derivation.

All randomness in the library flows through Philox counter-based generators
keyed by (seed, purpose tag, index).  Codebook draws, message draws, channel
noise, and measurement draws therefore never share a stream, and any parallel
or reordered schedule of independent trials reproduces the sequential results
bit for bit.
"""

import hashlib

import numpy as np


def derive_key(seed: int, tag: str, index: int = 0) -> int:
    """128-bit Philox key derived from (seed, tag, index)."""
    payload = f"{seed}:{tag}:{index}".encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=16).digest(), "little")


def stream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one purpose-tagged stream."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, tag, index)))


def child_seed(seed: int, tag: str, index: int = 0) -> int:
    """64-bit sub-seed for components that record their own seed."""
    return derive_key(seed, tag, index) & 0xFFFFFFFFFFFFFFFF
