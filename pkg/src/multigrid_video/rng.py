"""Seed-stream helpers.

All randomness in the package derives from one integer seed through
``numpy.random.SeedSequence`` with a stream tag, so independent consumers
(video content, per-iteration batches, weight init) never share or race a
generator.  A batch depends only on (seed, iteration), which is what makes
checkpoint resume and replay exact.
"""

from __future__ import annotations

import numpy as np

STREAM_VIDEO = 0
STREAM_BATCH = 1
STREAM_INIT = 2


def stream_rng(seed: int, stream: int, *key: int) -> np.random.Generator:
    """Generator for a (seed, stream, extra key) tuple."""
    return np.random.default_rng(np.random.SeedSequence([seed, stream, *key]))


def iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    """Generator driving batch composition for one training iteration."""
    return stream_rng(seed, STREAM_BATCH, iteration)
