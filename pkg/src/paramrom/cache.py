"""On-disk cache for FEM snapshot matrices.

Each entry is ``<key>.npy`` plus a ``<key>.json`` header. The key is a
SHA-256 of the mesh spec, the potential spec, the data identifiers and the
parameter points; the header repeats it together with a digest of the
stored array. An entry is used only if both match, otherwise it is
recomputed and overwritten.
"""

import hashlib
import json
import logging
import os

import numpy as np

from .elm import array_digest

CACHE_ENV = "PARAMROM_CACHE_DIR"
FORMAT = 1

log = logging.getLogger(__name__)


def cache_dir(configured=None, default=None):
    """Cache directory: env var, then the configured path, then ``default``."""
    return os.environ.get(CACHE_ENV) or configured or default


def snapshot_key(mesh_spec, potential_spec, data_id, points):
    header = json.dumps(
        {"format": FORMAT, "mesh": mesh_spec, "potentials": potential_spec, "data": data_id},
        sort_keys=True,
    )
    h = hashlib.sha256(header.encode())
    h.update(array_digest(np.asarray(points, dtype=float)).encode())
    return h.hexdigest()


class SnapshotCache:
    def __init__(self, directory):
        self.directory = directory
        self.hits = 0
        self.misses = 0
        self.rejected = 0

    def _paths(self, key):
        base = os.path.join(self.directory, key[:32])
        return base + ".npy", base + ".json"

    def load(self, key):
        if self.directory is None:
            return None
        npy, meta = self._paths(key)
        if not (os.path.exists(npy) and os.path.exists(meta)):
            return None
        try:
            with open(meta) as fh:
                header = json.load(fh)
            data = np.load(npy, allow_pickle=False)
        except (OSError, ValueError) as exc:
            log.warning("unreadable snapshot cache entry %s: %s", npy, exc)
            self.rejected += 1
            return None
        if header.get("key") != key or header.get("digest") != array_digest(data):
            log.warning("stale snapshot cache entry %s rejected", npy)
            self.rejected += 1
            return None
        self.hits += 1
        return data

    def store(self, key, data):
        if self.directory is None:
            return
        os.makedirs(self.directory, exist_ok=True)
        npy, meta = self._paths(key)
        np.save(npy, data)
        with open(meta, "w") as fh:
            json.dump({"key": key, "digest": array_digest(data), "shape": list(data.shape)}, fh)

    def get_or_compute(self, key, compute):
        data = self.load(key)
        if data is None:
            self.misses += 1
            data = compute()
            self.store(key, data)
        return data

    def stats(self):
        return {"hits": self.hits, "misses": self.misses, "rejected": self.rejected}
