"""Named, per-purpose random streams.

Every random draw in the package comes from a Philox (counter-based)
generator keyed by ``(seed, purpose)``. Streams for different purposes are
statistically independent, so adding an arm or a new consumer never shifts
the draws seen by another.
"""

import numpy as np

PURPOSES = {
    "data": 1,
    "split": 2,
    "init": 3,
    "sgd": 4,
}


def stream(seed, purpose, *extra):
    """Return a fresh generator for ``purpose`` under ``seed``.

    ``extra`` integers further subdivide a purpose (e.g. an epoch counter).
    """
    if purpose not in PURPOSES:
        raise KeyError(f"unknown random stream purpose {purpose!r}")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(PURPOSES[purpose], *map(int, extra)))
    return np.random.Generator(np.random.Philox(seq))
