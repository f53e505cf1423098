"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by a
:class:`numpy.random.SeedSequence`. Independent substreams are addressed by a
``spawn_key`` tuple, e.g. ``(scenario, setting, replicate)`` in the simulation
harness or ``(bootstrap_index,)`` in the bootstrap, so a given stream is the
same no matter which worker process draws it or in which order.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """A 64-bit seed for substream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])
