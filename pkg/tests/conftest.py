from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from anisores.backends import LinearCat
from anisores.cache_backends import MemoryCache
from anisores.config import AnisoresConfig, ConeConfig
from anisores.spectral_blocks import (
    ConeEnsemble,
    DyadicPartition,
    build_partition,
    ensemble_from_config,
)


@pytest.fixture
def test_config() -> AnisoresConfig:
    return AnisoresConfig(log_level="CRITICAL", threads=1, cache_size=8)


@pytest.fixture
def memory_cache() -> MemoryCache:
    return MemoryCache(max_size=10)


@pytest.fixture
def linear_cat() -> LinearCat:
    return LinearCat()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def partition() -> DyadicPartition:
    return build_partition(chi_order=3, max_level=7)


@pytest.fixture
def ensemble() -> ConeEnsemble:
    return ensemble_from_config(ConeConfig())


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[str], Path]:
    def _write(text: str, name: str = "run.ini") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
