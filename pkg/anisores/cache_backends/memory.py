from __future__ import annotations

import threading
from collections import OrderedDict
from typing import Any, Dict, Hashable, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from anisores.cache import FieldCache
from anisores.logging import get_logger

logger = get_logger("anisores.cache")


def payload_bytes(value: Any) -> int:
    """Memory held by a cached field or matrix; 0 for anything else."""
    if isinstance(value, np.ndarray):
        return int(value.nbytes)
    if sp.issparse(value):
        csr = value.tocsr()
        return int(csr.data.nbytes + csr.indices.nbytes + csr.indptr.nbytes)
    matrix = getattr(value, "matrix", None)
    if matrix is not None and matrix is not value:
        return payload_bytes(matrix)
    return 0


def _freeze(value: Any) -> None:
    if isinstance(value, np.ndarray):
        value.setflags(write=False)
    elif sp.issparse(value) and hasattr(value, "data"):
        value.data.setflags(write=False)


class MemoryCache(FieldCache):
    """
    LRU cache of direction fields and transfer matrices, bounded by entry count and,
    optionally, by the bytes of the stored arrays. Arrays are frozen on insert.
    """

    def __init__(self, max_size: int = 64, max_bytes: Optional[int] = None):
        self.max_size = max_size
        self.max_bytes = max_bytes
        self._data: OrderedDict[Hashable, Tuple[Any, int]] = OrderedDict()
        self._bytes = 0
        self._lock = threading.RLock()
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def get(self, key: Hashable) -> Optional[Any]:
        with self._lock:
            entry = self._data.get(key)
            if entry is None:
                self.misses += 1
                return None
            self._data.move_to_end(key)
            self.hits += 1
            return entry[0]

    def set(self, key: Hashable, value: Any) -> None:
        size = payload_bytes(value)
        if self.max_bytes is not None and size > self.max_bytes:
            logger.warning(f"Not caching {key!r}: {size} bytes exceeds budget {self.max_bytes}")
            return
        _freeze(value)
        with self._lock:
            if key in self._data:
                self._bytes -= self._data.pop(key)[1]
            while self._data and (
                len(self._data) >= self.max_size
                or (self.max_bytes is not None and self._bytes + size > self.max_bytes)
            ):
                _, (_, dropped) = self._data.popitem(last=False)
                self._bytes -= dropped
                self.evictions += 1
            self._data[key] = (value, size)
            self._bytes += size

    def clear(self) -> None:
        with self._lock:
            self._data.clear()
            self._bytes = 0
            self.hits = self.misses = self.evictions = 0

    def get_stats(self) -> Dict[str, Any]:
        with self._lock:
            return {
                "hits": self.hits,
                "misses": self.misses,
                "evictions": self.evictions,
                "size": len(self._data),
                "max_size": self.max_size,
                "bytes": self._bytes,
                "max_bytes": self.max_bytes,
            }
