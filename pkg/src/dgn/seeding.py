"""Named random substreams derived from one root seed.

Every source of randomness (weight init, test-set transforms, augmentation)
pulls from its own substream so partial reruns reproduce exactly.
"""

from __future__ import annotations

import numpy as np

INIT_STREAM = 0
TRANSFORM_STREAM = 1
AUGMENT_STREAM = 2

__all__ = ["AUGMENT_STREAM", "INIT_STREAM", "TRANSFORM_STREAM", "substream_rng"]


def substream_rng(seed, *key):
    """Generator for the substream named by integer ``key`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))
