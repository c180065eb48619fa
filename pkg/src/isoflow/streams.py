"""Deterministic random-stream management.

Every stochastic routine in the package draws from a stream addressed by a
master seed plus an integer path, so any sample can be regenerated from
``(seed, path)`` alone.  Streams are built with ``numpy.random.SeedSequence``
spawn keys, which are stable across platforms and numpy versions, and
independent streams never overlap regardless of how work is batched or
ordered.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator addressed by ``(seed, *path)``.

    The empty path is the master stream.  Components must be non-negative
    integers; the same address always yields the same stream.
    """
    if seed is None:
        raise ValueError("seed must be an explicit integer, not None")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)


def trajectory_stream(seed: int, trajectory_id: int) -> np.random.Generator:
    """Stream for one trajectory: hash of (seed, trajectory_id)."""
    return substream(seed, int(trajectory_id))
