"""Seeded random streams and reproducible substream derivation.

A stream is a ``numpy.random.Generator``. Streams are never shared
between concurrent tasks; parallel work derives one child substream per
work chunk, so results depend only on the root seed and the chunking,
never on scheduling.
"""

from __future__ import annotations

import numpy as np

RngStream = np.random.Generator


def make_rng(seed=None) -> RngStream:
    """Create a root stream from a seed (or from OS entropy if None)."""
    return np.random.default_rng(seed)


def substreams(rng: RngStream, n: int) -> list[RngStream]:
    """Derive ``n`` independent child streams, advancing the parent's
    spawn counter deterministically."""
    return rng.spawn(n)
