"""Seeded, counter-based random streams.

Every stochastic component draws from its own Philox stream keyed by
``(seed, component, *indices)``.  Serial and parallel execution of an
ensemble therefore produce identical numbers.
"""
from __future__ import annotations

import zlib

import numpy as np

# Stable component tags; never renumber, only append.
COMPONENTS = {
    "noise": 1,
    "readout": 2,
    "linewidth": 3,
    "phase": 4,
    "process": 5,
    "ensemble": 6,
}


def _component_key(component: str | int) -> int:
    if isinstance(component, (int, np.integer)):
        return int(component)
    try:
        return COMPONENTS[component]
    except KeyError:
        return zlib.crc32(component.encode()) + 1000


def substream(seed: int, component: str | int = 0, *indices: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, component, *indices)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = [int(seed), _component_key(component), *(int(i) for i in indices)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def as_generator(rng=None) -> np.random.Generator:
    """Coerce ``None``/int/Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng()
    return substream(int(rng))
