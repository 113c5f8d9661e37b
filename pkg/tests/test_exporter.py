import csv
import json

import numpy as np

from anisores.exporter import Exporter, schema_header
from anisores.models import RenormResult

from factories import build_resonance_record


def _renorm(rho, tau):
    return RenormResult(
        rho=rho,
        alpha=1.0,
        x=[0.1, 0.2],
        tau=tau,
        residual=0.0,
        derivative=0.38,
        method="closed_form",
    )

def test_schema_header():
    assert schema_header("abc123") == "# anisores-schema=1 config=abc123"
    assert schema_header(None) == "# anisores-schema=1 config=none"


def test_to_csv_from_models(tmp_path):
    path = tmp_path / "renorm.csv"
    results = [
        _renorm(0.5, 0.19),
        _renorm(1.0, 0.38),
    ]
    Exporter.to_csv(results, path, config_hash="feed")

    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# anisores-schema=1 config=feed"
    rows = list(csv.DictReader(lines[1:]))
    assert len(rows) == 2
    assert rows[1]["tau"] == "0.38"
    assert rows[0]["method"] == "closed_form"


def test_to_csv_empty_and_dict(tmp_path):
    empty = tmp_path / "empty.csv"
    Exporter.to_csv([], empty)
    assert empty.read_text(encoding="utf-8") == "# anisores-schema=1 config=none\n"

    single = tmp_path / "single.csv"
    Exporter.to_csv({"metric": "growth", "value": 1.5}, single)
    rows = list(csv.DictReader(single.read_text(encoding="utf-8").splitlines()[1:]))
    assert rows == [{"metric": "growth", "value": "1.5"}]


def test_to_json_handles_numpy(tmp_path):
    path = tmp_path / "payload.json"
    Exporter.to_json(
        {"vector": np.array([1.0 + 2.0j, 0.5]), "count": np.int64(3), "z": 1j}, path
    )
    payload = json.loads(path.read_text(encoding="utf-8"))
    assert payload["vector"] == {"real": [1.0, 0.5], "imag": [2.0, 0.0]}
    assert payload["count"] == 3
    assert payload["z"] == {"real": 0.0, "imag": 1.0}


def test_to_json_from_model(tmp_path):
    path = tmp_path / "renorm.json"
    result = RenormResult(
        rho=0.5, alpha=1.0, x=[0.1, 0.2], tau=0.19, residual=0.0, derivative=0.38, method="leaf"
    )
    Exporter.to_json(result, path)
    assert json.loads(path.read_text(encoding="utf-8"))["method"] == "leaf"


def test_to_plot_data(tmp_path):
    path = tmp_path / "growth_vs_alpha.dat"
    Exporter.to_plot_data([1, 2], [0.1, 1.0 / 3.0], path, "feed", labels=("alpha", "log_ratio"))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# anisores-schema=1 config=feed"
    assert lines[1] == "# alpha log_ratio"
    assert len(lines) == 4
    x, y = lines[3].split()
    assert float(x) == 2.0
    assert float(y) == 1.0 / 3.0


def test_resonance_rows_and_payload():
    record = build_resonance_record(K=8, stability=1e-12, algebraic_multiplicities=[2, 1])
    (row,) = Exporter.resonance_rows([record])
    assert float(row["re_lambda"]) == 0.5
    assert row["algebraic_multiplicities"] == "2 1"
    assert row["K"] == 8
    assert float(row["stability"]) == 1e-12

    (plain,) = Exporter.resonance_rows([build_resonance_record()])
    assert plain["stability"] == ""
    assert plain["K"] == ""

    (payload,) = Exporter.eigenvector_payload([record])
    assert payload["lambda"] == complex(0.5, 0.0)
    assert payload["multiplicities"] == [2, 1]
    assert payload["right"].shape == (2, 1)
