"""Reproducible random-number streams.

All stochastic code in the package draws from named streams derived from a
single 64-bit root seed, so runs are bit-reproducible and independent
subsystems (init, shuffling, sampling noise, ...) never share state.
"""
from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(name: str, root_seed: int) -> int:
    """Derive a 64-bit stream seed by hashing (stream name, root seed)."""
    digest = hashlib.sha256(f"{name}:{root_seed}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(name: str, root_seed: int) -> np.random.Generator:
    """An independent generator for the named stream under the root seed."""
    return np.random.default_rng(stream_seed(name, root_seed))
