import numpy as np
import pytest
import scipy.sparse as sp

from anisores.cache import FieldCache
from anisores.cache_backends.memory import MemoryCache, payload_bytes
from anisores.transfer_operator import TransferMatrix


def test_memory_cache_basic_ops():
    cache = MemoryCache(max_size=2)

    cache.set("a", 1)
    assert cache.get("a") == 1

    # LRU eviction
    cache.set("b", 2)
    cache.set("c", 3)

    assert cache.get("a") is None
    assert cache.get("b") == 2
    assert cache.get("c") == 3

    stats = cache.get_stats()
    assert stats["size"] == 2
    assert stats["evictions"] == 1
    assert stats["hits"] == 3
    assert stats["misses"] == 1


def test_memory_cache_recency():
    cache = MemoryCache(max_size=2)
    cache.set("a", 1)
    cache.set("b", 2)
    cache.get("a")
    cache.set("c", 3)

    assert cache.get("a") == 1
    assert cache.get("b") is None


def test_memory_cache_freezes_arrays(memory_cache):
    values = np.arange(4.0)
    memory_cache.set(("field", 4), values)

    stored = memory_cache.get(("field", 4))
    with pytest.raises(ValueError):
        stored[0] = 10.0


def test_memory_cache_clear(memory_cache):
    memory_cache.set("a", 1)
    memory_cache.get("a")
    memory_cache.clear()

    assert memory_cache.get_stats() == {
        "hits": 0,
        "misses": 0,
        "evictions": 0,
        "size": 0,
        "max_size": 10,
        "bytes": 0,
        "max_bytes": None,
    }


def test_memory_cache_protocol(memory_cache):
    assert isinstance(memory_cache, FieldCache)


def test_memory_cache_byte_budget():
    cache = MemoryCache(max_size=10, max_bytes=100)
    cache.set("a", np.zeros(8))
    cache.set("b", np.zeros(4))
    assert cache.get_stats()["bytes"] == 96

    # 64 more bytes only fit once "a" is gone
    cache.set("c", np.zeros(8))
    assert cache.get("a") is None
    assert cache.get("b") is not None
    stats = cache.get_stats()
    assert stats["bytes"] == 96
    assert stats["evictions"] == 1


def test_memory_cache_skips_oversized_entry():
    cache = MemoryCache(max_size=10, max_bytes=16)
    cache.set("big", np.zeros(8))
    assert cache.get("big") is None
    assert cache.get_stats()["size"] == 0


def test_memory_cache_replaces_key():
    cache = MemoryCache(max_size=2)
    cache.set("a", np.zeros(2))
    cache.set("a", np.zeros(3))
    stats = cache.get_stats()
    assert stats["size"] == 1
    assert stats["bytes"] == 24
    assert stats["evictions"] == 0


def test_payload_bytes_of_transfer_matrix():
    matrix = TransferMatrix(matrix=sp.identity(4, format="csr"), K=1, alpha=1.0)
    assert payload_bytes(matrix) > 0
    assert payload_bytes("not an array") == 0
