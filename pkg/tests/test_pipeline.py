import json

import pytest

from anisores.exceptions import GeometryError, InvalidParameterError, UnknownSeriesError
from anisores.pipeline import ResultStore, emit_plots, run_pipeline

from factories import build_run_config


def _manifest(store):
    return json.loads(store.manifest_path.read_text(encoding="utf-8"))


def test_partition_check_run(tmp_path, test_config):
    config = build_run_config(run={"experiment": "partition-check"})
    store = run_pipeline(config, tmp_path / "out", settings=test_config)

    assert store.passed
    for name in ("manifest.json", "config.ini", "partition.csv", "verdicts.csv"):
        assert (tmp_path / "out" / name).exists()
    manifest = _manifest(store)
    assert manifest["stages"] == {"partition-check": "ok", "partition": "ok"}
    assert manifest["finished_at"] is not None
    assert manifest["config_hash"] == store.config_hash
    assert "partition.csv" in manifest["artifacts"]


def test_partition_check_is_deterministic(tmp_path, test_config):
    config = build_run_config(run={"experiment": "partition-check", "seed": 3})
    first = run_pipeline(config, tmp_path / "a", settings=test_config)
    second = run_pipeline(config, tmp_path / "b", settings=test_config)
    assert (first.directory / "partition.csv").read_bytes() == (
        second.directory / "partition.csv"
    ).read_bytes()


def test_resonances_on_linear_cat(tmp_path, test_config):
    config = build_run_config(run={"experiment": "resonances"})
    store = run_pipeline(config, tmp_path, settings=test_config)

    assert store.manifest.stages["backend"] == "ok"
    assert store.manifest.stages["spectrum"] == "ok"
    metrics = {v.metric: v for v in store.manifest.verdicts}
    assert metrics["leading_real"].passed
    assert metrics["eigenfunction_constant"].passed
    assert metrics["adjoint_relation"].passed
    assert store.passed

    payload = json.loads((tmp_path / "eigenvectors.json").read_text(encoding="utf-8"))
    assert payload["config_hash"] == store.config_hash
    assert len(payload["data"]) == 1


def test_tau_verify_identities_on_linear_cat(tmp_path, test_config):
    config = build_run_config(run={"experiment": "tau-verify"})
    store = run_pipeline(config, tmp_path, settings=test_config)

    assert store.manifest.stages["identities"] == "ok"
    identities = [v for v in store.manifest.verdicts if v.stage == "identities"]
    assert identities
    assert all(v.passed for v in identities)
    metrics = {v.metric for v in identities}
    assert {
        "derivative_min",
        "growth_ratio_min",
        "growth_ratio_max",
        "inverse_ratio_min",
        "inverse_ratio_max",
    } <= metrics


def test_backend_failure_stops_the_run(tmp_path, test_config, mocker):
    mocker.patch(
        "anisores.pipeline.build_backend",
        side_effect=GeometryError("cones overlap", invariant="disjoint"),
    )
    config = build_run_config(run={"experiment": "cones"})
    store = run_pipeline(config, tmp_path, settings=test_config)

    assert not store.passed
    assert store.manifest.stages == {"backend": "failed"}
    assert store.manifest.errors["backend"] == "GeometryError: cones overlap"
    assert _manifest(store)["finished_at"] is not None


def test_stage_records_failures(tmp_path):
    store = ResultStore(tmp_path, build_run_config())
    with store.stage("boom"):
        raise InvalidParameterError("K too small")
    assert store.manifest.stages["boom"] == "failed"
    assert store.manifest.errors["boom"] == "InvalidParameterError: K too small"
    assert _manifest(store)["stages"]["boom"] == "failed"
    assert not store.passed

    with pytest.raises(ValueError):
        with store.stage("crash"):
            raise ValueError("not ours")


def test_check_verdicts(tmp_path):
    store = ResultStore(tmp_path, build_run_config())
    assert store.check("s", "small", 1e-3, 1e-2).passed
    assert not store.check("s", "large", 1.0, 1e-2).passed
    assert store.check("s", "floor", 2.0, 1.0, upper=False).passed
    assert not store.check("s", "nan", float("nan"), 1.0).passed
    assert not store.passed


def test_emit_plots(tmp_path):
    store = ResultStore(tmp_path, build_run_config())
    with pytest.raises(UnknownSeriesError, match="nothing"):
        emit_plots(store)

    store.add_series("growth", [3.0, 1.0, 2.0], [30.0, 10.0, 20.0], ("alpha", "norm"))
    store.add_series("residual", [10.0, 100.0], [1.0, 10.0], ("T", "E"), log=True)
    assert store.series["growth"].x == [1.0, 2.0, 3.0]

    written = emit_plots(store, directory=tmp_path / "plots")
    names = sorted(p.name for p in written)
    assert names == ["growth_vs_alpha.dat", "residual_vs_T.dat", "script.gp"]

    lines = (tmp_path / "plots" / "residual_vs_T.dat").read_text(encoding="utf-8").splitlines()
    assert lines[1] == "# log10_T log10_E"
    assert [float(v) for v in lines[2].split()] == [1.0, 0.0]
    assert "growth_vs_alpha.dat" in (tmp_path / "plots" / "script.gp").read_text(encoding="utf-8")

    with pytest.raises(UnknownSeriesError, match="missing"):
        emit_plots(store, which=["missing"])


def test_resonances_on_suspension_records_branches(tmp_path, test_config):
    config = build_run_config(
        run={"experiment": "resonances"},
        backend={"kind": "suspension", "epsilon2": 0.0},
        resolvent={"fibre_nodes": 8},
    )
    store = run_pipeline(config, tmp_path, settings=test_config)

    assert store.manifest.stages["spectrum"] == "ok"
    assert "generator_branches.csv" in store.manifest.artifacts
    metrics = {v.metric: v for v in store.manifest.verdicts}
    assert metrics["branch_leading"].passed
