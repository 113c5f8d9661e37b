from .memory import MemoryCache

__all__ = ["MemoryCache"]
