"""Counter-based random streams for reproducible parallel sampling.

Every stochastic component derives its stream from a base seed plus a
context tuple (e.g. basket name, interval bounds, shard index).  Streams
are Philox counter-based generators keyed by a hash of the context, so
the draw sequence is a pure function of (seed, context) and independent
of worker count or scheduling order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, *context) -> np.ndarray:
    """Derive a 128-bit Philox key from a seed and a context tuple."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for part in context:
        h.update(b"\x1f")
        h.update(str(part).encode())
    digest = h.digest()
    return np.frombuffer(digest[:16], dtype=np.uint64)


def make_stream(seed: int, *context) -> np.random.Generator:
    """Independent Generator for the given (seed, context) pair."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *context)))
