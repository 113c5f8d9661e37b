from __future__ import annotations

from typing import Any, Dict, Hashable, Optional, Protocol, runtime_checkable


@runtime_checkable
class FieldCache(Protocol):
    """
    Store for expensive immutable results keyed by hashable tuples, e.g.
    ``backend.key + ("stable_field", grid)`` or ``("transfer", backend.key, weight.key, n, K, G)``.
    """

    def get(self, key: Hashable) -> Optional[Any]:
        """Cached value, or None on a miss."""
        ...

    def set(self, key: Hashable, value: Any) -> None: ...

    def clear(self) -> None: ...

    def get_stats(self) -> Dict[str, Any]:
        """Counters (hits, misses, evictions, size, bytes) for run logs."""
        ...
