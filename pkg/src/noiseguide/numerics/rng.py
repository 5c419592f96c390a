"""Seeded random streams.

Every stochastic draw goes through a ``numpy.random.Generator`` backed by
the counter-based Philox bit generator.  Normals come from numpy's ziggurat
transform, which is deterministic for a given seed on one platform.
"""

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    if seed is None:
        raise ValueError("a seed is required; wall-clock seeding is not supported")
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def spawn(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Independent child streams, e.g. one per diffusion step."""
    seeds = rng.integers(0, 2**63 - 1, size=n)
    return [make_rng(int(s)) for s in seeds]
