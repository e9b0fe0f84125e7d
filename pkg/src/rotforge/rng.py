"""Deterministic random number generation.

All randomness in the library flows through counter-based Philox
generators so that results are reproducible bit-for-bit across runs,
platforms and (where applicable) parallel schedules.

Scheme (version 1):
  * a stream is a ``numpy.random.Generator`` backed by ``Philox`` keyed
    with a single 64-bit integer;
  * independent sub-streams (e.g. one per tree) use keys derived with
    :func:`mix64`, a SplitMix64-style finalizer over (seed, index).
"""

from __future__ import annotations

import numpy as np

RNG_SCHEME = "philox4x64-splitmix64-v1"

_MASK64 = (1 << 64) - 1


def mix64(seed: int, index: int) -> int:
    """Derive a 64-bit sub-seed from (seed, index).

    SplitMix64 finalizer applied to seed + golden-ratio increment * (index+1).
    """
    z = (int(seed) + 0x9E3779B97F4A7C15 * (int(index) + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def stream(seed: int) -> np.random.Generator:
    """A fresh deterministic generator for the given 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64))


def substream(seed: int, index: int) -> np.random.Generator:
    """Generator for sub-task `index` of a job seeded with `seed`."""
    return stream(mix64(seed, index))
