import pytest

from anisores import logging as anisores_logging
from anisores.logging import get_logger, run_context, run_fields, setup_logging


def test_run_context_binds_and_clears():
    if not anisores_logging.HAS_STRUCTLOG:
        pytest.skip("structlog not installed")
    assert run_fields() == {}
    with run_context("resonances", "a" * 64, 7):
        assert run_fields() == {"experiment": "resonances", "config_hash": "a" * 12, "seed": 7}
    assert run_fields() == {}


def test_run_context_without_structlog(monkeypatch):
    monkeypatch.setattr(anisores_logging, "HAS_STRUCTLOG", False)
    with run_context("cones", "feed", 0):
        assert run_fields() == {}
    assert hasattr(get_logger("anisores.test"), "info")


def test_setup_logging_accepts_unknown_level():
    setup_logging(level="chatty", json_format=True)
    get_logger("anisores.test").info("configured")
