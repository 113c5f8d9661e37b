import pytest
from pydantic import ValidationError

from anisores.config import EXPERIMENTS, AnisoresConfig, BackendConfig, RunConfig

from factories import build_run_config


def test_config_defaults():
    config = AnisoresConfig()
    assert config.log_level == "WARNING"
    assert config.log_json is False
    assert config.threads == 1
    assert config.cache_size == 64
    assert config.cache_megabytes is None


def test_config_from_env(monkeypatch):
    monkeypatch.setenv("ANISORES_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("ANISORES_LOG_JSON", "1")
    monkeypatch.setenv("ANISORES_THREADS", "4")
    monkeypatch.setenv("ANISORES_CACHE_SIZE", "16")
    monkeypatch.setenv("ANISORES_CACHE_MB", "256")

    config = AnisoresConfig.from_env()
    assert config.log_level == "DEBUG"
    assert config.log_json is True
    assert config.threads == 4
    assert config.cache_size == 16
    assert config.cache_megabytes == 256


def test_config_rejects_zero_threads():
    with pytest.raises(ValidationError):
        AnisoresConfig(threads=0)


def test_run_config_defaults():
    config = RunConfig()
    assert config.backend.kind == "linear_cat"
    assert config.truncation.K == 16
    assert config.resolvent.z_offsets == [1.0, 2.0, 4.0]
    assert config.run.experiment == "partition-check"
    assert config.run.experiment in EXPERIMENTS


def test_backend_epsilon_range():
    with pytest.raises(ValidationError):
        BackendConfig(kind="perturbed_cat", epsilon=0.2)
    with pytest.raises(ValidationError):
        BackendConfig(kind="suspension", epsilon2=1.0)


def test_sections_forbid_unknown_keys():
    with pytest.raises(ValidationError):
        build_run_config(truncation={"KK": 8})


def test_ly_probe_index_ordering():
    build_run_config(run={"experiment": "ly-probe"})

    with pytest.raises(ValidationError) as excinfo:
        build_run_config(run={"experiment": "ly-probe"}, index={"s": 0.5, "s_weak": 0.2})
    assert "index.s: must be negative" in str(excinfo.value)


def test_index_ordering_ignored_outside_ly_probe():
    config = build_run_config(index={"s": 0.5})
    assert config.index.s == 0.5
