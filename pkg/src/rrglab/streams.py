"""Reproducible random-number streams.

Streams are derived counter-based from a ``(seed, stream_id)`` pair using
the Philox-4x64 bit generator keyed with exactly those two words, so the
mapping is stateless and documented: stream k of seed s is
``Generator(Philox(key=[s mod 2^64, k mod 2^64]))``.  Equal pairs give
identical streams; distinct pairs give statistically independent ones.
Experiment drivers assign one stream per trial index, which makes results
independent of worker scheduling.
"""

import numpy as np

STREAM_ALGORITHM = "philox4x64:key=(seed,stream_id)"


def rng_stream(seed, stream_id=0):
    """Return the deterministic ``numpy.random.Generator`` for (seed, stream_id)."""
    key = np.array([np.uint64(seed % (1 << 64)), np.uint64(stream_id % (1 << 64))],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
