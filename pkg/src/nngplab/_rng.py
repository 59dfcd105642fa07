"""Counter-based randomness substreams.

Every random object in the library is drawn from a Philox generator whose
128-bit key encodes ``(seed, path...)``.  Results therefore do not depend on
evaluation order, chunking, or thread scheduling, and regenerating the same
substream is cheap (nothing has to be cached).

Gaussian draws go through the inverse CDF of uniform variates instead of the
generator's native normal method, so the mapping from key to values is pinned
down independently of the ziggurat implementation shipped with numpy.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


def _fold(token: int | str) -> int:
    if isinstance(token, str):
        return int.from_bytes(
            hashlib.blake2b(token.encode(), digest_size=8).digest(), "little"
        )
    return token & _MASK64


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """Generator keyed by (seed, path...); same arguments, same stream."""
    h = np.uint64(0x9E3779B97F4A7C15)
    for token in path:
        h = np.uint64((int(h) ^ _fold(token)) & _MASK64)
        # splitmix64 finalizer
        h = np.uint64((int(h) * 0xBF58476D1CE4E5B9) & _MASK64)
        h = np.uint64((int(h) ^ (int(h) >> np.uint64(31))) & _MASK64)
    key = ((seed & _MASK64) << 64) | int(h)
    return np.random.Generator(np.random.Philox(key=key))


def normals(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normals via the inverse CDF of uniform draws."""
    u = gen.random(shape)
    # gen.random() can return exactly 0.0, where ndtri diverges
    np.clip(u, 1e-300, 1.0 - 1e-16, out=u)
    return ndtri(u)
