from typing import Any, Dict

import numpy as np

from anisores.config import RunConfig
from anisores.oscillatory_quadrature import PhasePair, bump
from anisores.resonances import ResonanceRecord

FAST_SECTIONS: Dict[str, Dict[str, Any]] = {
    "partition": {"grid": 32, "max_level": 5},
    "truncation": {"K": 6, "stability_step": 2, "count": 1},
    "horocycle": {"samples": 2, "t_points": 8, "t_max": 100.0},
}


def _merged_sections(sections: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
    default = {name: dict(values) for name, values in FAST_SECTIONS.items()}
    for name, values in sections.items():
        default.setdefault(name, {}).update(values)
    return default


def build_run_config(**sections: Dict[str, Any]) -> RunConfig:
    return RunConfig(**_merged_sections(sections))  # type: ignore[arg-type]


def build_config_text(**sections: Dict[str, Any]) -> str:
    lines = []
    for name, values in _merged_sections(sections).items():
        lines.append(f"[{name}]")
        lines.extend(f"{key} = {value}" for key, value in values.items())
        lines.append("")
    return "\n".join(lines)


def build_resonance_record(**kwargs) -> ResonanceRecord:
    right = np.array([[1.0], [0.0]], dtype=complex)
    default = {
        "real": 0.5,
        "imag": 0.0,
        "mu": complex(np.exp(0.5)),
        "alpha": 1.0,
        "geometric_multiplicity": 1,
        "algebraic_multiplicities": [1],
        "right": right,
        "left": right.copy(),
    }
    default.update(kwargs)
    return ResonanceRecord(**default)  # type: ignore[arg-type]


def build_phase_pair(L: float = 1.0, **kwargs) -> PhasePair:
    default: Dict[str, Any] = {
        "phase": lambda z: L * (z[..., 0] + 0.25 * z[..., 0] ** 2),
        "gradient": lambda z: L * (1.0 + 0.5 * z),
        "amplitude": bump,
        "points": 1024,
    }
    default.update(kwargs)
    return PhasePair.sample(**default)
