import pytest
from pydantic import ValidationError

from anisores.models import Manifest, PeriodicOrbitReport, Verdict


def build_manifest(**kwargs) -> Manifest:
    default = {
        "config_hash": "0" * 64,
        "version": "0.1.0",
        "experiment": "partition-check",
        "seed": 0,
        "created_at": "2024-01-01T00:00:00+00:00",
    }
    default.update(kwargs)
    return Manifest(**default)  # type: ignore[arg-type]


def test_manifest_passed():
    manifest = build_manifest()
    assert manifest.passed

    manifest.verdicts.append(
        Verdict(stage="partition", metric="sum_defect", value=1e-16, threshold=1e-12, passed=True)
    )
    manifest.stages["partition"] = "ok"
    assert manifest.passed


def test_manifest_failed_verdict():
    manifest = build_manifest(
        verdicts=[
            Verdict(
                stage="spectrum", metric="leading_real", value=1.0, threshold=1e-9, passed=False
            )
        ]
    )
    assert not manifest.passed


def test_manifest_failed_stage():
    manifest = build_manifest(stages={"backend": "failed"})
    assert not manifest.passed


def test_models_forbid_extra():
    with pytest.raises(ValidationError):
        Verdict(stage="s", metric="m", value=0.0, threshold=1.0, passed=True, note="x")


def test_periodic_orbit_report_validation():
    with pytest.raises(ValidationError):
        PeriodicOrbitReport(periods=[2], counts=[5], estimates=[0.8])
