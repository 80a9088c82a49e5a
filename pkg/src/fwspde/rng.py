"""Deterministic seed derivation.

All Monte Carlo streams are derived from one 64-bit master seed by a
splitmix64 ladder: ``derive(master, *indices)`` folds each index into the
state with the splitmix64 finalizer, so any (stream id, path index, ...)
tuple maps to a well-mixed 64-bit seed independent of worker count or
evaluation order.  Per-path generators are ``PCG64(derive(master, stream,
path_index))``.

Stream ids used by the package (documented so runs can be reproduced
outside of it):

==============  ===
paths           1   plain Monte Carlo path batches
exit            2   exit-time sampling
==============  ===
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

STREAM_PATHS = 1
STREAM_EXIT = 2


def mix64(z: int) -> int:
    """splitmix64 output function (Steele, Lea, Flood 2014)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive(seed: int, *indices: int) -> int:
    """Fold indices into a master seed, one splitmix64 step per index."""
    s = int(seed) & _MASK
    for ix in indices:
        s = mix64((s + (int(ix) + 1) * _GOLDEN) & _MASK)
    return s


def path_seeds(master: int, stream: int, lo: int, hi: int) -> np.ndarray:
    """Seeds for paths ``lo..hi-1`` as uint64, ready for the kernels."""
    return np.array([derive(master, stream, p) for p in range(lo, hi)],
                    dtype=np.uint64)


def generator(seed: int) -> np.random.Generator:
    """The package-wide bit generator for a derived seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))
