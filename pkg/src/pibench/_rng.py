"""Deterministic random streams.

Every random draw in the project comes from a counter-based Philox generator
keyed by (seed, *path), so independent work units (patients, trees, search
candidates) can be generated in any order or in parallel without changing the
result.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF


def stream(seed: int, *path) -> np.random.Generator:
    """Return a Generator for the sub-stream identified by (seed, *path).

    Path components may be ints or strings; the key is derived by hashing, so
    distinct paths give independent streams regardless of component values.
    """
    material = repr((int(seed),) + tuple(path)).encode()
    digest = hashlib.sha256(material).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def substream_seed(seed: int, *path) -> int:
    """A 63-bit integer seed derived from (seed, *path), for non-numpy RNGs."""
    material = repr((int(seed),) + tuple(path)).encode()
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def splitmix64(state: int) -> tuple[int, int]:
    """One step of the splitmix64 sequence: returns (next_state, output).

    Plain uint64 arithmetic, reproduced verbatim in the compiled kernel so
    both backends sample identical feature subsets.
    """
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    z = z ^ (z >> 31)
    return state, z
