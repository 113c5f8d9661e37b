from __future__ import annotations

import os
from typing import Any, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

EXPERIMENTS = (
    "partition-check",
    "cones",
    "resonances",
    "ly-probe",
    "dolgopyat-probe",
    "tau-verify",
    "horo-fit",
    "ibp-check",
)

ExperimentName = Literal[
    "partition-check",
    "cones",
    "resonances",
    "ly-probe",
    "dolgopyat-probe",
    "tau-verify",
    "horo-fit",
    "ibp-check",
]


class AnisoresConfig(BaseModel):
    """Process-level settings shared by the CLI and the library."""

    log_level: str = "WARNING"
    log_json: bool = False
    threads: int = Field(default=1, ge=1)
    cache_size: int = Field(default=64, ge=1)
    cache_megabytes: Optional[int] = Field(default=None, ge=1)

    @classmethod
    def from_env(cls) -> AnisoresConfig:
        """Load configuration from environment variables."""
        config_data: dict[str, Any] = {}

        if "ANISORES_LOG_LEVEL" in os.environ:
            config_data["log_level"] = os.environ["ANISORES_LOG_LEVEL"]
        if "ANISORES_LOG_JSON" in os.environ:
            config_data["log_json"] = os.environ["ANISORES_LOG_JSON"].lower() in ("1", "true")
        if "ANISORES_THREADS" in os.environ:
            config_data["threads"] = int(os.environ["ANISORES_THREADS"])
        if "ANISORES_CACHE_SIZE" in os.environ:
            config_data["cache_size"] = int(os.environ["ANISORES_CACHE_SIZE"])
        if "ANISORES_CACHE_MB" in os.environ:
            config_data["cache_megabytes"] = int(os.environ["ANISORES_CACHE_MB"])

        return cls(**config_data)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BackendConfig(_Section):
    """Model system selection."""

    kind: Literal["linear_cat", "perturbed_cat", "suspension"] = "linear_cat"
    epsilon: float = Field(default=0.02, ge=0.0, le=0.1)
    shape: Literal["additive", "shear"] = "additive"
    epsilon2: float = Field(default=0.1, ge=0.0, lt=1.0)
    smoothness: float = Field(default=4.0, gt=1.0)
    direction_iterations: int = Field(default=40, ge=1)
    grid: int = Field(default=64, ge=8)


class IndexConfig(_Section):
    """Anisotropic regularity exponents (s, t, q, p) and the weak companion index."""

    s: float = -0.9
    t: float = 0.9
    q: float = 0.5
    p: float = Field(default=2.0, gt=1.0)
    s_weak: float = -1.4
    t_weak: float = 0.4
    q_weak: float = 0.0


class PartitionConfig(_Section):
    chi_order: int = Field(default=3, ge=2)
    norm: Literal["euclidean", "l4"] = "euclidean"
    max_level: int = Field(default=7, ge=1)
    grid: int = Field(default=256, ge=8)


class ConeConfig(_Section):
    """Double cones given by axis angle and half-aperture, all in degrees."""

    minus_axis: Optional[float] = None
    plus_axis: Optional[float] = None
    minus_aperture: float = Field(default=18.43494882, gt=0.0, lt=90.0)
    plus_aperture: float = Field(default=18.43494882, gt=0.0, lt=90.0)
    transition_width: float = Field(default=10.0, gt=0.0, lt=90.0)


class TruncationConfig(_Section):
    K: int = Field(default=16, ge=4)
    alpha: float = Field(default=1.0, gt=0.0)
    stability_step: int = Field(default=8, ge=1)
    weight: Literal["horocycle", "constant", "potential"] = "horocycle"
    constant: float = 1.0
    region_delta: Optional[float] = None
    count: int = Field(default=8, ge=1)


class ResolventConfig(_Section):
    method: Literal["fibre", "laguerre"] = "fibre"
    fibre_nodes: int = Field(default=20, ge=4)
    fibre_rate: Optional[float] = None
    z_offsets: List[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0])
    n_max: int = Field(default=20, ge=1)
    samples: int = Field(default=6, ge=1)
    dolgopyat_a: float = Field(default=0.5, gt=0.0)
    dolgopyat_b: float = Field(default=2.0, gt=1.0)
    dolgopyat_b_max: float = Field(default=50.0, gt=1.0)
    dolgopyat_gamma: float = Field(default=0.5, ge=0.0)
    dolgopyat_delta: float = 0.5


class HorocycleConfig(_Section):
    epsilon: float = Field(default=0.25, gt=0.0, le=0.25)
    t_min: float = Field(default=2.718281828459045, gt=0.0)
    t_max: float = Field(default=1.0e4, gt=0.0)
    t_points: int = Field(default=40, ge=2)
    samples: int = Field(default=20, ge=1)


class ToleranceConfig(_Section):
    """Acceptance thresholds; each pipeline verdict compares one metric to one of these."""

    partition: float = 1e-12
    renorm_map: float = 1e-9
    renorm_flow: float = 1e-5
    growth_linear: float = 1e-6
    growth_relative: float = 0.02
    growth_constant: float = 10.0
    decay_relative: float = 0.05
    margin: float = 1e-6
    leading: float = 1e-9
    biorthogonality: float = 1e-10
    adjoint: float = 1e-6
    stability: float = 1e-3
    branch: float = 1e-6
    ly_slack: float = 0.10
    saturation: float = 0.01
    resolvent: float = 1e-7
    uniformity: float = 1.1
    identity: float = 1e-6
    cutoff: float = 1e-6
    residual_exponent: float = 0.05
    ibp: float = 1e-8
    ibp_decay: float = 0.1
    mollifier_relative: float = 0.10


class RunSection(_Section):
    experiment: ExperimentName = "partition-check"
    seed: int = 0
    output: str = "results"


class RunConfig(BaseModel):
    """Validated configuration of one experiment run."""

    model_config = ConfigDict(extra="forbid")

    backend: BackendConfig = Field(default_factory=BackendConfig)
    index: IndexConfig = Field(default_factory=IndexConfig)
    partition: PartitionConfig = Field(default_factory=PartitionConfig)
    cones: ConeConfig = Field(default_factory=ConeConfig)
    truncation: TruncationConfig = Field(default_factory=TruncationConfig)
    resolvent: ResolventConfig = Field(default_factory=ResolventConfig)
    horocycle: HorocycleConfig = Field(default_factory=HorocycleConfig)
    tolerances: ToleranceConfig = Field(default_factory=ToleranceConfig)
    run: RunSection = Field(default_factory=RunSection)

    @model_validator(mode="after")
    def _check_exponents(self) -> RunConfig:
        if self.run.experiment != "ly-probe":
            return self
        idx = self.index
        problems = []
        if not idx.s < 0:
            problems.append(("index.s", "must be negative for the Lasota-Yorke probe"))
        if not 0 < idx.q <= idx.t:
            problems.append(("index.q", "requires 0 < q <= t for the Lasota-Yorke probe"))
        if not idx.s_weak < idx.s:
            problems.append(("index.s_weak", "must be below index.s"))
        if not idx.q - 1 <= idx.q_weak < idx.q:
            problems.append(("index.q_weak", "requires q - 1 <= q_weak < q"))
        if not idx.t_weak < idx.t:
            problems.append(("index.t_weak", "must be below index.t"))
        if problems:
            raise ValueError("; ".join(f"{path}: {msg}" for path, msg in problems))
        return self
