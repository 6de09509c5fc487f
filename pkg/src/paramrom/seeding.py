"""Named sub-seeds derived from a master seed.

Every random component (potential centers, targets, feature banks, noise)
draws from its own stream so that any one of them can be pinned or varied
without disturbing the others.
"""

import zlib

import numpy as np


def sub_seed(master, name, *index):
    """A ``SeedSequence`` keyed by ``(master, name, *index)``."""
    key = [int(master) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode("utf-8"))]
    key.extend(int(i) for i in index)
    return np.random.SeedSequence(key)


def sub_rng(master, name, *index):
    return np.random.default_rng(sub_seed(master, name, *index))
