from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1


def schema_header(config_hash: Optional[str]) -> str:
    return f"# anisores-schema={SCHEMA_VERSION} config={config_hash or 'none'}"


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return {"real": value.real.tolist(), "imag": value.imag.tolist()}
        return value.tolist()
    if isinstance(value, complex):
        return {"real": value.real, "imag": value.imag}
    if isinstance(value, np.generic):
        return value.item()
    return str(value)


class Exporter:
    """
    Handles exporting anisores results to different formats.
    Tables go to CSV, nested payloads (eigenvectors, manifests) to JSON, curves to
    two-column plot data. Every file starts from the config hash it was produced with.
    """

    @staticmethod
    def to_json(data: Any, path: str | Path) -> None:
        content = ""
        if hasattr(data, "model_dump_json"):
            content = data.model_dump_json(indent=2)
        else:
            content = json.dumps(data, indent=2, default=_plain)

        with open(path, "w", encoding="utf-8") as f:
            f.write(content)

    @staticmethod
    def to_csv(data: Any, path: str | Path, config_hash: Optional[str] = None) -> None:
        """
        Flatten and export to CSV under a one-line schema header.
        """
        records: List[Dict[str, Any]] = []
        if isinstance(data, dict):
            records.append(dict(data))
        else:
            for item in data:
                if hasattr(item, "model_dump"):
                    records.append(item.model_dump())
                elif isinstance(item, dict):
                    records.append(dict(item))
                else:
                    records.append({"data": str(item)})

        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(schema_header(config_hash) + "\n")
            if not records:
                return
            keys = list(records[0].keys())
            writer = csv.DictWriter(f, fieldnames=keys)
            writer.writeheader()
            writer.writerows(records)

    @staticmethod
    def to_plot_data(
        x: Sequence[float],
        y: Sequence[float],
        path: str | Path,
        config_hash: Optional[str] = None,
        labels: Sequence[str] = ("x", "y"),
    ) -> None:
        """Two whitespace-separated columns, full precision."""
        xs = np.asarray(x, dtype=float)
        ys = np.asarray(y, dtype=float)
        with open(path, "w", encoding="utf-8") as f:
            f.write(schema_header(config_hash) + "\n")
            f.write(f"# {labels[0]} {labels[1]}\n")
            for a, b in zip(xs, ys):
                f.write(f"{a:.17g} {b:.17g}\n")

    @staticmethod
    def resonance_rows(records: Sequence[Any]) -> List[Dict[str, Any]]:
        """Flat table rows for a list of resonance records."""
        rows = []
        for r in records:
            rows.append(
                {
                    "re_lambda": repr(float(r.real)),
                    "im_lambda": repr(float(r.imag)),
                    "geometric_multiplicity": r.geometric_multiplicity,
                    "algebraic_multiplicities": " ".join(
                        str(m) for m in r.algebraic_multiplicities
                    ),
                    "stability": "" if r.stability is None else repr(float(r.stability)),
                    "K": "" if r.K is None else r.K,
                }
            )
        return rows

    @staticmethod
    def eigenvector_payload(records: Sequence[Any]) -> List[Dict[str, Any]]:
        return [
            {
                "lambda": complex(r.real, r.imag),
                "multiplicities": list(r.algebraic_multiplicities),
                "right": r.right,
                "left": r.left,
            }
            for r in records
        ]
