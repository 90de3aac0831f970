"""Seeded, splittable randomness for byte-reproducible runs.

All stochastic code paths draw from PCG64 generators spawned off explicit
integer seeds. Standard normals are produced by a fixed Box-Muller
transform of the uniform stream rather than the library's ziggurat, so the
exact draw sequence is pinned by this module alone.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def split_rng(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child generators for per-request / per-item substreams."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Box-Muller normals from two uniform draws per output entry."""
    u1 = rng.random(shape)
    u2 = rng.random(shape)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
